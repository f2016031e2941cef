//! Bundled generative models.
//!
//! * [`lotka_volterra_model`]: predator–prey SDE under an Euler–Maruyama
//!   discretisation, observed at every step.
//! * [`linear_gaussian_model`], [`circle_model`], [`toy1d_model`]: small
//!   models with closed-form or quadrature-computable posteriors.

use crate::autodiff::{DiffFunction, DiffMode, ForwardOnly, Scalar, ScalarFunction, Taped};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{
    GeneratorModel, NoiseStructure, Observation, StandardNormal, StructureKind,
};
use crate::rng::{chain_rng, standard_normal_vec};

fn boxed<F: ScalarFunction + 'static>(f: F, mode: DiffMode) -> Box<dyn DiffFunction> {
    match mode {
        DiffMode::ForwardDual => Box::new(ForwardOnly(f)),
        _ => Box::new(Taped(f)),
    }
}

/// Selects inputs `indices`, optionally affinely mapped.
struct Coordinates {
    input_dim: usize,
    indices: Vec<usize>,
    shift: f64,
    scale: f64,
}

impl ScalarFunction for Coordinates {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.indices.len()
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        self.indices
            .iter()
            .map(|&i| u[i] * self.scale + self.shift)
            .collect()
    }
}

fn coordinates(input_dim: usize, indices: Vec<usize>) -> Coordinates {
    Coordinates {
        input_dim,
        indices,
        shift: 0.0,
        scale: 1.0,
    }
}

// ---------------------------------------------------------------------------
// Linear Gaussian

pub struct WeightedSum {
    pub weights: Vec<f64>,
}

impl ScalarFunction for WeightedSum {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        let s = u
            .iter()
            .zip(&self.weights)
            .fold(T::constant(0.0), |acc, (&x, &w)| acc + x * w);
        vec![s]
    }
}

/// `u ~ N(0, I)`, `y = wᵀu`, `z = u₁`.
pub fn linear_gaussian_model(weights: &[f64]) -> Result<GeneratorModel> {
    let m = weights.len();
    if m == 0 || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidConfig("weights must not all be zero".into()));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    let noise = weights.iter().position(|&w| w != 0.0).expect("checked above");
    let global = (0..m).filter(|&i| i != noise).collect();
    GeneratorModel::new(
        "linear_gaussian",
        Box::new(Taped(WeightedSum {
            weights: weights.to_vec(),
        })),
        Box::new(Taped(coordinates(m, vec![0]))),
        Box::new(StandardNormal::default()),
    )?
    .with_structure(NoiseStructure {
        kind: StructureKind::Elementwise,
        global_indices: global,
        noise_indices: vec![noise],
    })
    .map(|m| m.with_latent_names(vec!["u1".into()]))
}

/// Mean and covariance of `u | wᵀu = ȳ` for `u ~ N(0, I)`.
pub fn linear_gaussian_conditional(weights: &[f64], y: f64) -> (Vec<f64>, DenseMatrix) {
    let ww: f64 = weights.iter().map(|w| w * w).sum();
    let mean = weights.iter().map(|w| w * y / ww).collect();
    let n = weights.len();
    let cov = DenseMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - weights[i] * weights[j] / ww
    });
    (mean, cov)
}

// ---------------------------------------------------------------------------
// Circle

pub struct SquaredNorm;

impl ScalarFunction for SquaredNorm {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        vec![u[0] * u[0] + u[1] * u[1]]
    }
}

pub struct Angle;

impl ScalarFunction for Angle {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        vec![u[1].atan2(u[0])]
    }
}

/// `u ~ N(0, I₂)`, `y = ‖u‖²`, `z = atan2(u₂, u₁)`. Condition on
/// [`circle_observation`] to restrict to the circle of the given radius.
pub fn circle_model() -> GeneratorModel {
    GeneratorModel::new(
        "circle",
        Box::new(Taped(SquaredNorm)),
        Box::new(Taped(Angle)),
        Box::new(StandardNormal::default()),
    )
    .expect("dimensions are consistent")
    .with_latent_names(vec!["angle".into()])
    .with_init_solver(|obs, seed| {
        let r2 = obs.values()[0];
        if r2 <= 0.0 {
            return Err(Error::Unsupported("a non-positive squared radius"));
        }
        let mut rng = chain_rng(seed, 0);
        let u = standard_normal_vec(&mut rng, 2);
        let n = u[0].hypot(u[1]);
        if n == 0.0 {
            return Err(Error::Singular);
        }
        let s = r2.sqrt() / n;
        Ok(vec![u[0] * s, u[1] * s])
    })
}

pub fn circle_observation(radius: f64) -> Result<Observation> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidConfig("radius must be positive".into()));
    }
    Observation::new(vec![radius * radius], format!("circle r={radius}"))
}

// ---------------------------------------------------------------------------
// One-dimensional toy

/// Noise scale of [`toy1d_model`].
pub const TOY1D_NOISE: f64 = 0.5;

pub struct CubicPlusNoise;

impl ScalarFunction for CubicPlusNoise {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        vec![u[0].powi(3) + u[1] * TOY1D_NOISE]
    }
}

/// `z = u₁ ~ N(0, 1)`, `y = z³ + 0.5·u₂`.
pub fn toy1d_model() -> GeneratorModel {
    GeneratorModel::new(
        "toy1d",
        Box::new(Taped(CubicPlusNoise)),
        Box::new(Taped(coordinates(2, vec![0]))),
        Box::new(StandardNormal::default()),
    )
    .expect("dimensions are consistent")
    .with_structure(NoiseStructure {
        kind: StructureKind::Elementwise,
        global_indices: vec![0],
        noise_indices: vec![1],
    })
    .expect("structure partitions the inputs")
    .with_parameter_indices(vec![0])
    .with_latent_names(vec!["z".into()])
    .with_init_solver(|obs, seed| {
        let z = standard_normal_vec(&mut chain_rng(seed, 0), 1)[0];
        Ok(vec![z, (obs.values()[0] - z.powi(3)) / TOY1D_NOISE])
    })
}

// ---------------------------------------------------------------------------
// Lotka–Volterra

/// Parameter values used to generate the reference observations.
pub const LV_TRUE_PARAMETERS: [f64; 4] = [0.4, 0.005, 0.05, 0.001];

const LV_PARAMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LotkaVolterraSpec {
    pub n_steps: usize,
    pub dt_sim: f64,
    pub y0: [f64; 2],
    pub prior_mu: f64,
    pub prior_sigma: f64,
}

impl Default for LotkaVolterraSpec {
    fn default() -> Self {
        Self {
            n_steps: 25,
            dt_sim: 1.0,
            y0: [100.0, 100.0],
            prior_mu: -2.0,
            prior_sigma: 1.0,
        }
    }
}

impl LotkaVolterraSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        if !(self.dt_sim > 0.0 && self.dt_sim.is_finite()) {
            return Err(Error::InvalidConfig("dt_sim must be positive".into()));
        }
        if !(self.y0.iter().all(|&y| y > 0.0 && y.is_finite())) {
            return Err(Error::InvalidConfig("initial populations must be positive".into()));
        }
        if !(self.prior_sigma > 0.0 && self.prior_mu.is_finite() && self.prior_sigma.is_finite())
        {
            return Err(Error::InvalidConfig("prior scale must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        LV_PARAMS + 2 * self.n_steps
    }

    pub fn observed_dim(&self) -> usize {
        2 * self.n_steps
    }

    /// Index of the noise input driving population `c` at step `t` (1-based).
    pub fn noise_index(&self, t: usize, c: usize) -> usize {
        LV_PARAMS + 2 * (t - 1) + c
    }

    pub fn parameters_from_inputs(&self, u: &[f64]) -> [f64; 4] {
        std::array::from_fn(|i| (self.prior_mu + self.prior_sigma * u[i]).exp())
    }

    pub fn inputs_from_parameters(&self, z: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| (z[i].ln() - self.prior_mu) / self.prior_sigma)
    }

    /// Euler–Maruyama trajectory `[y₁¹, y₂¹, …, y₁ᵀ, y₂ᵀ]`.
    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        LotkaVolterraObserved { spec: *self }.eval(u)
    }

    /// Noise inputs that make the simulator reproduce `y` exactly under
    /// parameters `z`.
    pub fn back_solve_noise(&self, z: &[f64; 4], y: &[f64]) -> Vec<f64> {
        let h = self.dt_sim;
        let sh = h.sqrt();
        let (mut a, mut b) = (self.y0[0], self.y0[1]);
        let mut n = Vec::with_capacity(2 * self.n_steps);
        for t in 0..self.n_steps {
            let (a1, b1) = (y[2 * t], y[2 * t + 1]);
            n.push((a1 - a - (z[0] * a - z[1] * a * b) * h) / sh);
            n.push((b1 - b - (-z[2] * b + z[3] * a * b) * h) / sh);
            (a, b) = (a1, b1);
        }
        n
    }

    /// Least-squares parameter fit to an observed trajectory (ignoring the
    /// prior); `None` when a fitted rate is not positive.
    fn least_squares_parameters(&self, y: &[f64]) -> Option<[f64; 4]> {
        let h = self.dt_sim;
        // Δa/h = z₁·a − z₂·ab and Δb/h = −z₃·b + z₄·ab, each a 2-regressor fit
        let mut s1 = [[0.0; 2]; 2];
        let mut r1 = [0.0; 2];
        let mut s2 = [[0.0; 2]; 2];
        let mut r2 = [0.0; 2];
        let (mut a, mut b) = (self.y0[0], self.y0[1]);
        for t in 0..self.n_steps {
            let (a1, b1) = (y[2 * t], y[2 * t + 1]);
            let x1 = [a, -a * b];
            let x2 = [-b, a * b];
            let (d1, d2) = ((a1 - a) / h, (b1 - b) / h);
            for i in 0..2 {
                for j in 0..2 {
                    s1[i][j] += x1[i] * x1[j];
                    s2[i][j] += x2[i] * x2[j];
                }
                r1[i] += x1[i] * d1;
                r2[i] += x2[i] * d2;
            }
            (a, b) = (a1, b1);
        }
        let solve = |s: [[f64; 2]; 2], r: [f64; 2]| {
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            (det.abs() > 1e-300).then(|| {
                [
                    (s[1][1] * r[0] - s[0][1] * r[1]) / det,
                    (s[0][0] * r[1] - s[1][0] * r[0]) / det,
                ]
            })
        };
        let p = solve(s1, r1)?;
        let q = solve(s2, r2)?;
        let z = [p[0], p[1], q[0], q[1]];
        z.iter().all(|&v| v > 0.0 && v.is_finite()).then_some(z)
    }

    fn full_inputs(&self, z: &[f64; 4], y: &[f64]) -> Vec<f64> {
        let mut u = self.inputs_from_parameters(z).to_vec();
        u.extend(self.back_solve_noise(z, y));
        u
    }
}

/// Observed trajectory as a function of all inputs.
pub struct LotkaVolterraObserved {
    pub spec: LotkaVolterraSpec,
}

impl ScalarFunction for LotkaVolterraObserved {
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.spec.observed_dim()
    }
    fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        let s = &self.spec;
        let h = s.dt_sim;
        let sh = h.sqrt();
        let z: Vec<T> = (0..LV_PARAMS)
            .map(|i| (u[i] * s.prior_sigma + s.prior_mu).exp())
            .collect();
        let mut a = T::constant(s.y0[0]);
        let mut b = T::constant(s.y0[1]);
        let mut out = Vec::with_capacity(s.observed_dim());
        for t in 1..=s.n_steps {
            let ab = a * b;
            let a1 = a + (z[0] * a - z[1] * ab) * h + u[s.noise_index(t, 0)] * sh;
            let b1 = b + (z[3] * ab - z[2] * b) * h + u[s.noise_index(t, 1)] * sh;
            out.push(a1);
            out.push(b1);
            a = a1;
            b = b1;
        }
        out
    }
}

/// Hand-derived derivatives of [`LotkaVolterraObserved`].
///
/// The Jacobian is propagated forward as `D_t = A_t·D_{t−1} + B_t`, where
/// `D_t = ∂(a_t, b_t)/∂u`, `A_t` is the one-step state Jacobian and `B_t`
/// the direct input partials. The second contraction is the gradient of
/// `φ(u) = Σ_t ⟨W_t, D_t(u)⟩` with `W` held fixed, obtained by a reverse pass
/// over that recursion.
pub struct LotkaVolterraAnalytic {
    pub spec: LotkaVolterraSpec,
}

struct LvForward {
    z: [f64; 4],
    /// States `s_0..s_T`.
    states: Vec<[f64; 2]>,
    /// `D_1..D_T`, each two rows of length M.
    d: Vec<[Vec<f64>; 2]>,
}

impl LotkaVolterraAnalytic {
    fn step_jacobian(&self, z: &[f64; 4], a: f64, b: f64) -> [[f64; 2]; 2] {
        let h = self.spec.dt_sim;
        [
            [1.0 + (z[0] - z[1] * b) * h, -z[1] * a * h],
            [z[3] * b * h, 1.0 + (z[3] * a - z[2]) * h],
        ]
    }

    /// Direct partials of one step with respect to the four parameter inputs.
    fn parameter_partials(&self, zd: &[f64; 4], a: f64, b: f64) -> [[f64; 4]; 2] {
        let h = self.spec.dt_sim;
        [
            [zd[0] * a * h, -zd[1] * a * b * h, 0.0, 0.0],
            [0.0, 0.0, -zd[2] * b * h, zd[3] * a * b * h],
        ]
    }

    fn forward(&self, u: &[f64]) -> LvForward {
        let s = &self.spec;
        let m = s.input_dim();
        let sh = s.dt_sim.sqrt();
        let z = s.parameters_from_inputs(u);
        let zd = z.map(|v| v * s.prior_sigma);
        let mut states = Vec::with_capacity(s.n_steps + 1);
        states.push(s.y0);
        let mut d: Vec<[Vec<f64>; 2]> = Vec::with_capacity(s.n_steps);
        let y = s.simulate(u);
        for t in 1..=s.n_steps {
            let [a, b] = states[t - 1];
            let at = self.step_jacobian(&z, a, b);
            let bt = self.parameter_partials(&zd, a, b);
            let mut rows = [vec![0.0; m], vec![0.0; m]];
            if let Some(prev) = d.last() {
                // only parameters and earlier noise columns are non-zero
                let width = s.noise_index(t, 0);
                for (r, row) in rows.iter_mut().enumerate() {
                    for k in 0..width {
                        row[k] = at[r][0] * prev[0][k] + at[r][1] * prev[1][k];
                    }
                }
            }
            for r in 0..2 {
                for k in 0..LV_PARAMS {
                    rows[r][k] += bt[r][k];
                }
                rows[r][s.noise_index(t, r)] = sh;
            }
            d.push(rows);
            states.push([y[2 * (t - 1)], y[2 * (t - 1) + 1]]);
        }
        LvForward { z, states, d }
    }
}

impl DiffFunction for LotkaVolterraAnalytic {
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.spec.observed_dim()
    }

    fn mode(&self) -> DiffMode {
        DiffMode::AnalyticClosures
    }

    fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        self.spec.simulate(u)
    }

    fn jvp_unchecked(&self, u: &[f64], tangent: &[f64]) -> Vec<f64> {
        let s = &self.spec;
        let sh = s.dt_sim.sqrt();
        let z = s.parameters_from_inputs(u);
        let zd = z.map(|v| v * s.prior_sigma);
        let y = s.simulate(u);
        let (mut a, mut b) = (s.y0[0], s.y0[1]);
        let mut ds = [0.0; 2];
        let mut out = Vec::with_capacity(s.observed_dim());
        for t in 1..=s.n_steps {
            let at = self.step_jacobian(&z, a, b);
            let bt = self.parameter_partials(&zd, a, b);
            let mut next = [0.0; 2];
            for r in 0..2 {
                next[r] = at[r][0] * ds[0]
                    + at[r][1] * ds[1]
                    + (0..LV_PARAMS).map(|k| bt[r][k] * tangent[k]).sum::<f64>()
                    + sh * tangent[s.noise_index(t, r)];
            }
            ds = next;
            out.extend(ds);
            a = y[2 * (t - 1)];
            b = y[2 * (t - 1) + 1];
        }
        out
    }

    fn vjp_unchecked(&self, u: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let j = self.jacobian_unchecked(u);
        let m = self.input_dim();
        let mut out = vec![0.0; m];
        for (k, &c) in cotangent.iter().enumerate() {
            if c != 0.0 {
                for (o, &jk) in out.iter_mut().zip(&j[k * m..(k + 1) * m]) {
                    *o += c * jk;
                }
            }
        }
        out
    }

    fn jacobian_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let f = self.forward(u);
        let mut out = Vec::with_capacity(self.output_dim() * self.input_dim());
        for [r0, r1] in f.d {
            out.extend(r0);
            out.extend(r1);
        }
        out
    }

    fn second_contraction_unchecked(&self, u: &[f64], w: &DenseMatrix) -> Vec<f64> {
        let s = &self.spec;
        let m = s.input_dim();
        let h = s.dt_sim;
        let sh = h.sqrt();
        let sigma = s.prior_sigma;
        let LvForward { z, states, d } = self.forward(u);
        let zd = z.map(|v| v * sigma);
        let zdd = zd.map(|v| v * sigma);

        let mut r = vec![0.0; m];
        let mut lam = [vec![0.0; m], vec![0.0; m]];
        let mut sbar = [0.0; 2];
        for t in (1..=s.n_steps).rev() {
            for c in 0..2 {
                for (l, &wv) in lam[c].iter_mut().zip(w.row(2 * (t - 1) + c)) {
                    *l += wv;
                }
            }
            let [a, b] = states[t - 1];
            let at = self.step_jacobian(&z, a, b);
            let bt = self.parameter_partials(&zd, a, b);

            // P = Λ·D_{t−1}ᵀ
            let mut p = [[0.0; 2]; 2];
            if t > 1 {
                let prev = &d[t - 2];
                let width = s.noise_index(t, 0);
                for i in 0..2 {
                    for j in 0..2 {
                        p[i][j] = lam[i][..width]
                            .iter()
                            .zip(&prev[j][..width])
                            .map(|(x, y)| x * y)
                            .sum();
                    }
                }
            }
            let l10 = lam[0][0];
            let l11 = lam[0][1];
            let l22 = lam[1][2];
            let l23 = lam[1][3];

            // direct dependence of A_t and B_t on (a, b) and on the parameters
            let ga = p[0][1] * (-z[1] * h)
                + p[1][1] * (z[3] * h)
                + l10 * zd[0] * h
                - l11 * zd[1] * b * h
                + l23 * zd[3] * b * h;
            let gb = p[0][0] * (-z[1] * h) + p[1][0] * (z[3] * h) - l11 * zd[1] * a * h
                - l22 * zd[2] * h
                + l23 * zd[3] * a * h;
            r[0] += p[0][0] * zd[0] * h + l10 * zdd[0] * a * h;
            r[1] += -p[0][0] * zd[1] * b * h - p[0][1] * zd[1] * a * h - l11 * zdd[1] * a * b * h;
            r[2] += -p[1][1] * zd[2] * h - l22 * zdd[2] * b * h;
            r[3] += p[1][0] * zd[3] * b * h + p[1][1] * zd[3] * a * h + l23 * zdd[3] * a * b * h;

            // primal recursion s_t = F(s_{t−1}, u)
            for k in 0..LV_PARAMS {
                r[k] += bt[0][k] * sbar[0] + bt[1][k] * sbar[1];
            }
            r[s.noise_index(t, 0)] += sh * sbar[0];
            r[s.noise_index(t, 1)] += sh * sbar[1];
            sbar = [
                at[0][0] * sbar[0] + at[1][0] * sbar[1] + ga,
                at[0][1] * sbar[0] + at[1][1] * sbar[1] + gb,
            ];

            // Λ ← A_tᵀ·Λ
            let width = s.noise_index(t, 0);
            for k in 0..width {
                let (x0, x1) = (lam[0][k], lam[1][k]);
                lam[0][k] = at[0][0] * x0 + at[1][0] * x1;
                lam[1][k] = at[0][1] * x0 + at[1][1] * x1;
            }
            for c in 0..2 {
                for row in lam.iter_mut() {
                    row[s.noise_index(t, c)] = 0.0;
                }
            }
        }
        r
    }
}

/// Lotka–Volterra model with hand-derived derivatives.
pub fn lotka_volterra_model(spec: LotkaVolterraSpec) -> Result<GeneratorModel> {
    lotka_volterra_model_with(spec, DiffMode::AnalyticClosures)
}

/// Lotka–Volterra model with the requested derivative engine.
pub fn lotka_volterra_model_with(spec: LotkaVolterraSpec, mode: DiffMode) -> Result<GeneratorModel> {
    spec.validate()?;
    let m = spec.input_dim();
    let g_y: Box<dyn DiffFunction> = match mode {
        DiffMode::AnalyticClosures => Box::new(LotkaVolterraAnalytic { spec }),
        other => boxed(LotkaVolterraObserved { spec }, other),
    };
    let g_z = Coordinates {
        input_dim: m,
        indices: (0..LV_PARAMS).collect(),
        shift: spec.prior_mu,
        scale: spec.prior_sigma,
    };
    let model = GeneratorModel::new(
        "lotka_volterra",
        g_y,
        Box::new(Taped(g_z)),
        Box::new(StandardNormal::default()),
    )?
    .with_structure(NoiseStructure {
        kind: StructureKind::Autoregressive,
        global_indices: (0..LV_PARAMS).collect(),
        noise_indices: (LV_PARAMS..m).collect(),
    })?
    .with_parameter_indices((0..LV_PARAMS).collect())
    .with_latent_names((1..=4).map(|i| format!("log_z{i}")).collect())
    .with_init_solver(move |obs, seed| lv_initial_point(&spec, obs, seed));
    Ok(model)
}

/// Fits the rates by least squares, jitters them slightly per seed, and
/// back-solves the noise. Falls back to the best of a batch of prior draws.
fn lv_initial_point(spec: &LotkaVolterraSpec, obs: &Observation, seed: u64) -> Result<Vec<f64>> {
    let y = obs.values();
    if y.len() != spec.observed_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.observed_dim(),
            found: y.len(),
        });
    }
    let mut rng = chain_rng(seed, 0);
    let log_rho = |u: &[f64]| -0.5 * u.iter().map(|x| x * x).sum::<f64>();
    if let Some(z) = spec.least_squares_parameters(y) {
        let base = spec.inputs_from_parameters(&z);
        let jitter = standard_normal_vec(&mut rng, LV_PARAMS);
        let up: [f64; 4] = std::array::from_fn(|i| base[i] + 0.01 * jitter[i]);
        return Ok(spec.full_inputs(&spec.parameters_from_inputs(&up), y));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..100 {
        let up = standard_normal_vec(&mut rng, LV_PARAMS);
        let u = spec.full_inputs(&spec.parameters_from_inputs(&up), y);
        let lr = log_rho(&u);
        if lr.is_finite() && best.as_ref().is_none_or(|(b, _)| lr > *b) {
            best = Some((lr, u));
        }
    }
    best.map(|(_, u)| u).ok_or(Error::NonFinite("back-solved noise"))
}

/// Inputs reproducing the given parameters with standard-normal noise drawn
/// from `seed`, and the resulting observation.
pub fn lotka_volterra_truth(
    spec: &LotkaVolterraSpec,
    parameters: &[f64; 4],
    seed: u64,
) -> Result<(Vec<f64>, Observation)> {
    spec.validate()?;
    if parameters.iter().any(|&z| !(z > 0.0 && z.is_finite())) {
        return Err(Error::InvalidConfig("rates must be positive".into()));
    }
    let mut u = spec.inputs_from_parameters(parameters).to_vec();
    u.extend(standard_normal_vec(&mut chain_rng(seed, 0), 2 * spec.n_steps));
    let y = spec.simulate(&u);
    let obs = Observation::new(y, format!("lotka_volterra T={} seed={seed}", spec.n_steps))?;
    Ok((u, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{jacobian, second_contraction};
    use crate::model::{constraint, constraint_jacobian, find_initial, structured_gram_factor};
    use crate::linalg::{cholesky, gram};

    fn small_spec(t: usize) -> LotkaVolterraSpec {
        LotkaVolterraSpec {
            n_steps: t,
            ..Default::default()
        }
    }

    fn paper_inputs(spec: &LotkaVolterraSpec, seed: u64) -> Vec<f64> {
        lotka_volterra_truth(spec, &LV_TRUE_PARAMETERS, seed).unwrap().0
    }

    #[test]
    fn first_step_by_hand() {
        let spec = small_spec(3);
        let mut u = spec.inputs_from_parameters(&LV_TRUE_PARAMETERS).to_vec();
        u.extend(vec![0.0; 6]);
        let y = spec.simulate(&u);
        assert!((y[0] - 90.0).abs() < 1e-10);
        assert!((y[1] - 105.0).abs() < 1e-10);
    }

    #[test]
    fn back_solve_round_trip() {
        let spec = small_spec(25);
        let (u, obs) = lotka_volterra_truth(&spec, &LV_TRUE_PARAMETERS, 4).unwrap();
        let z = spec.parameters_from_inputs(&u);
        let n = spec.back_solve_noise(&z, obs.values());
        for (a, b) in n.iter().zip(&u[4..]) {
            assert!((a - b).abs() < 1e-9);
        }
        let model = lotka_volterra_model(spec).unwrap();
        let u0 = find_initial(&model, &obs, 9, 1e-9).unwrap();
        let c = constraint(&model, &obs, &u0).unwrap();
        assert!(c.iter().all(|x| x.abs() < 1e-12 * 100.0), "{c:?}");
    }

    #[test]
    fn noise_block_is_unit_lower_triangular_up_to_scale() {
        let spec = small_spec(6);
        let model = lotka_volterra_model(spec).unwrap();
        let u = paper_inputs(&spec, 1);
        let (j, _) = constraint_jacobian(&model, &u).unwrap();
        let noise = &model.structure().noise_indices;
        for i in 0..spec.observed_dim() {
            for (k, &col) in noise.iter().enumerate() {
                if k > i {
                    assert_eq!(j[(i, col)], 0.0);
                }
                if k == i {
                    assert_eq!(j[(i, col)], spec.dt_sim.sqrt());
                }
            }
        }
    }

    #[test]
    fn analytic_taped_and_forward_derivatives_agree() {
        let spec = LotkaVolterraSpec {
            n_steps: 5,
            dt_sim: 0.7,
            prior_sigma: 0.8,
            ..Default::default()
        };
        let u = paper_inputs(&spec, 2);
        let analytic = LotkaVolterraAnalytic { spec };
        let taped = Taped(LotkaVolterraObserved { spec });
        let fwd = ForwardOnly(LotkaVolterraObserved { spec });
        let ja = jacobian(&analytic, &u).unwrap();
        let jt = jacobian(&taped, &u).unwrap();
        let jf = jacobian(&fwd, &u).unwrap();
        let scale = jt.max_abs();
        for (x, (y, v)) in ja.as_slice().iter().zip(jt.as_slice().iter().zip(jf.as_slice())) {
            assert!((x - y).abs() <= 1e-12 * scale);
            assert!((v - y).abs() <= 1e-12 * scale);
        }
        let w = DenseMatrix::from_fn(spec.observed_dim(), spec.input_dim(), |i, j| {
            ((3 * i + 7 * j) as f64).sin()
        });
        let ra = second_contraction(&analytic, &u, &w).unwrap();
        let rt = second_contraction(&taped, &u, &w).unwrap();
        let rs = rt.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in ra.iter().zip(&rt) {
            assert!((x - y).abs() <= 1e-10 * rs, "{ra:?}\n{rt:?}");
        }
        let t: Vec<f64> = (0..spec.input_dim()).map(|i| (i as f64).cos()).collect();
        let jv = crate::autodiff::jvp(&analytic, &u, &t).unwrap();
        let expected = jt.matvec(&t).unwrap();
        for (x, y) in jv.iter().zip(&expected) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn structured_factor_matches_dense() {
        let spec = small_spec(25);
        let model = lotka_volterra_model(spec).unwrap();
        let u = paper_inputs(&spec, 3);
        let (j, _) = constraint_jacobian(&model, &u).unwrap();
        let fast = structured_gram_factor(&j, model.structure()).unwrap();
        let dense = cholesky(&gram(&j)).unwrap();
        for i in 0..spec.observed_dim() {
            for k in 0..=i {
                assert!((fast.get(i, k) - dense.get(i, k)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linear_gaussian_conditional_examples() {
        let (mean, cov) = linear_gaussian_conditional(&[1.0, 1.0], 3.0);
        assert_eq!(mean, vec![1.5, 1.5]);
        assert_eq!(cov[(0, 0)], 0.5);
        let (mean, cov) = linear_gaussian_conditional(&[1.0, 0.0], 2.0);
        assert_eq!((mean[0], cov[(0, 0)], cov[(1, 1)]), (2.0, 0.0, 1.0));
        let (mean, _) = linear_gaussian_conditional(&[1.0; 4], 0.0);
        assert_eq!(mean[0], 0.0);
        assert!(linear_gaussian_model(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn circle_and_toy_examples() {
        let m = circle_model();
        let obs = circle_observation(1.0).unwrap();
        assert!(constraint(&m, &obs, &[0.6, 0.8]).unwrap()[0].abs() < 1e-15);
        let (j, l) = constraint_jacobian(&m, &[0.6, 0.8]).unwrap();
        assert_eq!(j.as_slice(), &[1.2, 1.6]);
        assert!((l.get(0, 0) - 2.0).abs() < 1e-15);
        let u = find_initial(&m, &obs, 5, 1e-12).unwrap();
        assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-12);

        let t = toy1d_model();
        assert_eq!(t.observe(&[1.0, 0.0]), vec![1.0]);
        assert_eq!(t.latents(&[1.0, 0.0]), vec![1.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(small_spec(0).validate().is_err());
        assert!(LotkaVolterraSpec {
            dt_sim: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
