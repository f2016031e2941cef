//! Derivative engine for generator functions.
//!
//! Generators are written once against the [`Scalar`] trait and evaluated
//! with different number types:
//!
//! * `f64` for plain values,
//! * [`Dual<T>`] for forward-mode directional derivatives,
//! * [`Var`] for reverse-mode sweeps over a recorded [`Tape`],
//! * `Dual<Var>` for the second-order contractions needed by the manifold
//!   log-density gradient (forward-over-reverse).
//!
//! [`DiffFunction`] is the object-safe face the rest of the crate uses. It is
//! implemented by [`Taped`] (reverse-mode Jacobians, the default),
//! [`ForwardOnly`] (forward-mode everything, a cross-check) and [`Analytic`]
//! (hand-written closures).

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Number type a generator can be evaluated with.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn atan2(self, x: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

// ---------------------------------------------------------------------------
// Forward mode

/// First-order dual number `v + d·ε` over any scalar type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(v: T, d: T) -> Self {
        Self { v, d }
    }

    /// Chain rule for a unary function with value `fv` and derivative `dfv`.
    #[inline]
    fn chain(self, fv: T, dfv: T) -> Self {
        Self {
            v: fv,
            d: self.d * dfv,
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self::new(q, (self.d - q * o.d) / o.v)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self::new(self.v + c, self.d)
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self::new(self.v - c, self.d)
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Self::new(self.v * c, self.d * c)
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Self::new(self.v / c, self.d / c)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(x: f64) -> Self {
        Self::new(T::constant(x), T::constant(0.0))
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), T::constant(1.0) / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, T::constant(0.5) / s)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, T::constant(1.0) - t * t)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        self.chain(self.v.powi(n), self.v.powi(n - 1) * n as f64)
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        Self::new(self.v.atan2(x.v), (x.v * self.d - self.v * x.d) / r2)
    }
}

// ---------------------------------------------------------------------------
// Reverse mode

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
}

/// Recording of elementary operations for a reverse sweep.
///
/// A tape is confined to one thread; variables borrow it for their lifetime.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`]. Constants carry no tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A fresh independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push([(NO_PARENT, 0.0); 2]);
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    fn push(&self, parents: [(u32, f64); 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node { parents });
        index
    }

    /// Propagates the given output seeds back through the tape and returns
    /// the adjoint of every node.
    pub fn adjoints(&self, seeds: &[(Var<'_>, f64)]) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        for (v, w) in seeds {
            if v.index != NO_PARENT {
                adj[v.index as usize] += w;
            }
        }
        for i in (0..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, w) in &nodes[i].parents {
                if p != NO_PARENT {
                    adj[p as usize] += a * w;
                }
            }
        }
        adj
    }

    /// Gradient of `Σ seeds_k·output_k` with respect to `inputs`.
    pub fn gradient(&self, seeds: &[(Var<'_>, f64)], inputs: &[Var<'_>]) -> Vec<f64> {
        let adj = self.adjoints(seeds);
        inputs
            .iter()
            .map(|v| {
                if v.index == NO_PARENT {
                    0.0
                } else {
                    adj[v.index as usize]
                }
            })
            .collect()
    }

    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }
}

impl<'t> Var<'t> {
    #[inline]
    fn constant_value(value: f64) -> Self {
        Var {
            tape: None,
            index: NO_PARENT,
            value,
        }
    }

    pub fn index(&self) -> Option<usize> {
        (self.index != NO_PARENT).then_some(self.index as usize)
    }

    #[inline]
    fn unary(self, value: f64, partial: f64) -> Self {
        match self.tape {
            Some(t) => Var {
                tape: Some(t),
                index: t.push([(self.index, partial), (NO_PARENT, 0.0)]),
                value,
            },
            None => Var::constant_value(value),
        }
    }

    #[inline]
    fn binary(self, o: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, o.tape) {
            (Some(t), Some(_)) => Var {
                tape: Some(t),
                index: t.push([(self.index, da), (o.index, db)]),
                value,
            },
            (Some(_), None) => self.unary(value, da),
            (None, Some(_)) => o.unary(value, db),
            (None, None) => Var::constant_value(value),
        }
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, #{:?})", self.value, self.index())
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        self.binary(o, q, 1.0 / o.value, -q / o.value)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        self.unary(self.value + c, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        self.unary(self.value - c, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        if c == 0.0 {
            return Var::constant_value(0.0);
        }
        self.unary(self.value * c, c)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self.unary(self.value / c, 1.0 / c)
    }
}

impl Scalar for Var<'_> {
    fn constant(x: f64) -> Self {
        Var::constant_value(x)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Var::constant_value(1.0);
        }
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.value * self.value + x.value * x.value;
        self.binary(x, self.value.atan2(x.value), x.value / r2, -self.value / r2)
    }
}

// ---------------------------------------------------------------------------
// Differentiable functions

/// How a [`DiffFunction`] obtains its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    TapedReverse,
    ForwardDual,
    AnalyticClosures,
}

/// A vector function written generically over [`Scalar`].
pub trait ScalarFunction: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T>;
}

/// Object-safe differentiable vector function `R^M → R^N`.
pub trait DiffFunction: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn mode(&self) -> DiffMode;
    fn evaluate(&self, u: &[f64]) -> Vec<f64>;
    /// `(∂f/∂u)·tangent`.
    fn jvp_unchecked(&self, u: &[f64], tangent: &[f64]) -> Vec<f64>;
    /// `cotangentᵀ·(∂f/∂u)`.
    fn vjp_unchecked(&self, u: &[f64], cotangent: &[f64]) -> Vec<f64>;
    /// Full Jacobian, shape `output_dim × input_dim`, row-major.
    fn jacobian_unchecked(&self, u: &[f64]) -> Vec<f64>;
    /// `r_i = Σ_{k,j} W_kj ∂²f_k/∂u_i∂u_j`.
    fn second_contraction_unchecked(&self, u: &[f64], w: &DenseMatrix) -> Vec<f64>;
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_input(f: &dyn DiffFunction, u: &[f64]) -> Result<()> {
    check_dim(f.input_dim(), u.len())?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("function input"));
    }
    Ok(())
}

/// Jacobian `∂f/∂u` as a dense matrix.
pub fn jacobian(f: &dyn DiffFunction, u: &[f64]) -> Result<DenseMatrix> {
    check_input(f, u)?;
    let data = f.jacobian_unchecked(u);
    let m = f.input_dim();
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteDerivative {
            output: pos / m.max(1),
            input: pos % m.max(1),
        });
    }
    Ok(DenseMatrix::from_fn(f.output_dim(), m, |i, j| data[i * m + j]))
}

/// Jacobian-vector product.
pub fn jvp(f: &dyn DiffFunction, u: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
    check_input(f, u)?;
    check_dim(f.input_dim(), tangent.len())?;
    let out = f.jvp_unchecked(u, tangent);
    if let Some(k) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteDerivative { output: k, input: 0 });
    }
    Ok(out)
}

/// Vector-Jacobian product.
pub fn vjp(f: &dyn DiffFunction, u: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
    check_input(f, u)?;
    check_dim(f.output_dim(), cotangent.len())?;
    let out = f.vjp_unchecked(u, cotangent);
    if let Some(i) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteDerivative { output: 0, input: i });
    }
    Ok(out)
}

/// `r_i = trace((∂²f/∂u_i∂u)·Wᵀ)` for `W` of shape `output_dim × input_dim`.
pub fn second_contraction(f: &dyn DiffFunction, u: &[f64], w: &DenseMatrix) -> Result<Vec<f64>> {
    check_input(f, u)?;
    check_dim(f.output_dim(), w.rows())?;
    check_dim(f.input_dim(), w.cols())?;
    let out = f.second_contraction_unchecked(u, w);
    if let Some(i) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteDerivative { output: 0, input: i });
    }
    Ok(out)
}

fn forward_jvp<F: ScalarFunction>(f: &F, u: &[f64], tangent: &[f64]) -> Vec<f64> {
    let x: Vec<Dual<f64>> = u.iter().zip(tangent).map(|(&v, &d)| Dual::new(v, d)).collect();
    f.eval(&x).into_iter().map(|y| y.d).collect()
}

/// Reverse-mode engine: one recording, one backward sweep per output row.
pub struct Taped<F>(pub F);

impl<F: ScalarFunction> Taped<F> {
    pub fn inner(&self) -> &F {
        &self.0
    }
}

impl<F: ScalarFunction> DiffFunction for Taped<F> {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    fn mode(&self) -> DiffMode {
        DiffMode::TapedReverse
    }

    fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        self.0.eval(u)
    }

    fn jvp_unchecked(&self, u: &[f64], tangent: &[f64]) -> Vec<f64> {
        forward_jvp(&self.0, u, tangent)
    }

    fn vjp_unchecked(&self, u: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let tape = Tape::new();
        let x: Vec<Var> = u.iter().map(|&v| tape.var(v)).collect();
        let y = self.0.eval(&x);
        let seeds: Vec<(Var, f64)> = y.iter().copied().zip(cotangent.iter().copied()).collect();
        tape.gradient(&seeds, &x)
    }

    fn jacobian_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        let tape = Tape::new();
        let x: Vec<Var> = u.iter().map(|&v| tape.var(v)).collect();
        let y = self.0.eval(&x);
        let mut out = Vec::with_capacity(y.len() * m);
        for yk in &y {
            out.extend(tape.gradient(&[(*yk, 1.0)], &x));
        }
        out
    }

    fn second_contraction_unchecked(&self, u: &[f64], w: &DenseMatrix) -> Vec<f64> {
        // Sweep j seeds the forward tangent e_j and back-propagates
        // Σ_k W_kj·(∂f_k/∂u_j), whose gradient is Σ_k W_kj ∂²f_k/∂u_j∂u.
        // Summing over j and using symmetry of each Hessian gives r.
        let m = u.len();
        let mut r = vec![0.0; m];
        let tape = Tape::new();
        for j in 0..m {
            let col = w.column(j);
            if col.iter().all(|&c| c == 0.0) {
                continue;
            }
            tape.clear();
            let base: Vec<Var> = u.iter().map(|&v| tape.var(v)).collect();
            let x: Vec<Dual<Var>> = base
                .iter()
                .enumerate()
                .map(|(i, &v)| Dual::new(v, Var::constant(if i == j { 1.0 } else { 0.0 })))
                .collect();
            let y = self.0.eval(&x);
            let seeds: Vec<(Var, f64)> = y.iter().zip(&col).map(|(yk, &c)| (yk.d, c)).collect();
            for (ri, g) in r.iter_mut().zip(tape.gradient(&seeds, &base)) {
                *ri += g;
            }
        }
        r
    }
}

/// Forward-mode engine: Jacobians by `M` directional sweeps and second
/// contractions by forward-over-forward. Slower; kept as an independent
/// cross-check of [`Taped`].
pub struct ForwardOnly<F>(pub F);

impl<F: ScalarFunction> DiffFunction for ForwardOnly<F> {
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    fn mode(&self) -> DiffMode {
        DiffMode::ForwardDual
    }

    fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        self.0.eval(u)
    }

    fn jvp_unchecked(&self, u: &[f64], tangent: &[f64]) -> Vec<f64> {
        forward_jvp(&self.0, u, tangent)
    }

    fn vjp_unchecked(&self, u: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let jac = self.jacobian_unchecked(u);
        let m = u.len();
        (0..m)
            .map(|j| cotangent.iter().enumerate().map(|(k, c)| c * jac[k * m + j]).sum())
            .collect()
    }

    fn jacobian_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        let n = self.0.output_dim();
        let mut out = vec![0.0; n * m];
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            for (k, d) in forward_jvp(&self.0, u, &e).into_iter().enumerate() {
                out[k * m + j] = d;
            }
            e[j] = 0.0;
        }
        out
    }

    fn second_contraction_unchecked(&self, u: &[f64], w: &DenseMatrix) -> Vec<f64> {
        let m = u.len();
        let mut r = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                let x: Vec<Dual<Dual<f64>>> = u
                    .iter()
                    .enumerate()
                    .map(|(l, &v)| {
                        let di = if l == i { 1.0 } else { 0.0 };
                        let dj = if l == j { 1.0 } else { 0.0 };
                        Dual::new(Dual::new(v, dj), Dual::new(di, 0.0))
                    })
                    .collect();
                let y = self.0.eval(&x);
                r[i] += y.iter().enumerate().map(|(k, yk)| w[(k, j)] * yk.d.d).sum::<f64>();
            }
        }
        r
    }
}

type ValueFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> DenseMatrix + Send + Sync;
type ContractionFn = dyn Fn(&[f64], &DenseMatrix) -> Vec<f64> + Send + Sync;

/// Hand-derived value, Jacobian and second-contraction closures.
pub struct Analytic {
    input_dim: usize,
    output_dim: usize,
    value: Box<ValueFn>,
    jacobian: Box<JacobianFn>,
    contraction: Box<ContractionFn>,
}

impl Analytic {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DenseMatrix + Send + Sync + 'static,
        contraction: impl Fn(&[f64], &DenseMatrix) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            input_dim,
            output_dim,
            value: Box::new(value),
            jacobian: Box::new(jacobian),
            contraction: Box::new(contraction),
        }
    }
}

impl DiffFunction for Analytic {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn mode(&self) -> DiffMode {
        DiffMode::AnalyticClosures
    }

    fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        (self.value)(u)
    }

    fn jvp_unchecked(&self, u: &[f64], tangent: &[f64]) -> Vec<f64> {
        (self.jacobian)(u).matvec(tangent).expect("dimensions checked by caller")
    }

    fn vjp_unchecked(&self, u: &[f64], cotangent: &[f64]) -> Vec<f64> {
        (self.jacobian)(u)
            .matvec_transposed(cotangent)
            .expect("dimensions checked by caller")
    }

    fn jacobian_unchecked(&self, u: &[f64]) -> Vec<f64> {
        (self.jacobian)(u).as_slice().to_vec()
    }

    fn second_contraction_unchecked(&self, u: &[f64], w: &DenseMatrix) -> Vec<f64> {
        (self.contraction)(u, w)
    }
}
