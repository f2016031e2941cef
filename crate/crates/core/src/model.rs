//! The generative-model contract.
//!
//! A [`GeneratorModel`] maps inputs `u ~ ρ` to observed outputs `y = g_y(u)`
//! and latent quantities of interest `z = g_z(u)`. Conditioning on `y = ȳ`
//! restricts `u` to the constraint manifold `c(u) = g_y(u) − ȳ = 0`.

use std::fmt;
use std::path::Path;

use crate::autodiff::{self, DiffFunction};
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, chol_rank1_update_in_place, cholesky, cholesky_solve, gram, norm2, norm_inf,
    DenseMatrix, LowerTriangular, Lu,
};
use crate::rng::{chain_rng, standard_normal_vec, ChainRng};

pub const DEFAULT_MAX_RESTARTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Dense,
    /// Each output depends on the global inputs and one noise input.
    Elementwise,
    /// Each output depends on the global inputs, earlier outputs and one
    /// noise input; noise indices are listed in generation order.
    Autoregressive,
}

/// Split of the inputs into global inputs `v` and per-output noise `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseStructure {
    pub kind: StructureKind,
    pub global_indices: Vec<usize>,
    pub noise_indices: Vec<usize>,
}

impl NoiseStructure {
    pub fn dense() -> Self {
        Self {
            kind: StructureKind::Dense,
            global_indices: Vec::new(),
            noise_indices: Vec::new(),
        }
    }

    pub fn new(
        kind: StructureKind,
        global_indices: Vec<usize>,
        noise_indices: Vec<usize>,
        input_dim: usize,
    ) -> Result<Self> {
        let s = Self {
            kind,
            global_indices,
            noise_indices,
        };
        if kind != StructureKind::Dense {
            let mut seen = vec![false; input_dim];
            for &i in s.global_indices.iter().chain(&s.noise_indices) {
                if i >= input_dim || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidConfig(format!(
                        "input {i} is out of range or listed twice in the noise structure"
                    )));
                }
            }
            if seen.iter().any(|&b| !b) {
                return Err(Error::InvalidConfig(
                    "noise structure does not cover every input".into(),
                ));
            }
        }
        Ok(s)
    }
}

/// An observed output vector `ȳ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
    label: String,
}

impl Observation {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parses one decimal value per line; blank lines are skipped.
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t.parse().map_err(|_| {
                Error::InvalidConfig(format!("line {}: cannot parse {t:?} as a number", n + 1))
            })?;
            values.push(v);
        }
        Self::new(values, label)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.display().to_string())
    }

    /// One value per line in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for v in &self.values {
            s.push_str(&format!("{v}\n"));
        }
        s
    }
}

/// Base density `ρ` of the generator inputs.
pub trait BaseDensity: Send + Sync {
    fn log_density(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    fn sample(&self, dim: usize, rng: &mut ChainRng) -> Vec<f64>;

    /// Whether the density is `N(0, I)` up to a constant.
    fn is_standard_normal(&self) -> bool {
        false
    }
}

/// Isotropic unit Gaussian, up to the additive constant `log_offset`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal {
    pub log_offset: f64,
}

impl BaseDensity for StandardNormal {
    fn log_density(&self, u: &[f64]) -> f64 {
        -0.5 * u.iter().map(|x| x * x).sum::<f64>() + self.log_offset
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|x| -x).collect()
    }

    fn sample(&self, dim: usize, rng: &mut ChainRng) -> Vec<f64> {
        standard_normal_vec(rng, dim)
    }

    fn is_standard_normal(&self) -> bool {
        true
    }
}

pub type InitSolver = dyn Fn(&Observation, u64) -> Result<Vec<f64>> + Send + Sync;

pub struct GeneratorModel {
    name: String,
    g_y: Box<dyn DiffFunction>,
    g_z: Box<dyn DiffFunction>,
    base: Box<dyn BaseDensity>,
    structure: NoiseStructure,
    init_solver: Option<Box<InitSolver>>,
    parameter_indices: Option<Vec<usize>>,
    latent_names: Vec<String>,
}

impl fmt::Debug for GeneratorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorModel")
            .field("name", &self.name)
            .field("input_dim", &self.input_dim())
            .field("observed_dim", &self.observed_dim())
            .field("latent_dim", &self.latent_dim())
            .field("structure", &self.structure.kind)
            .finish()
    }
}

impl GeneratorModel {
    pub fn new(
        name: impl Into<String>,
        g_y: Box<dyn DiffFunction>,
        g_z: Box<dyn DiffFunction>,
        base: Box<dyn BaseDensity>,
    ) -> Result<Self> {
        if g_y.input_dim() != g_z.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: g_y.input_dim(),
                found: g_z.input_dim(),
            });
        }
        if g_y.output_dim() > g_y.input_dim() {
            return Err(Error::InvalidConfig(format!(
                "{} observed outputs exceed {} inputs",
                g_y.output_dim(),
                g_y.input_dim()
            )));
        }
        let latent_names = (0..g_z.output_dim()).map(|i| format!("z{}", i + 1)).collect();
        Ok(Self {
            name: name.into(),
            g_y,
            g_z,
            base,
            structure: NoiseStructure::dense(),
            init_solver: None,
            parameter_indices: None,
            latent_names,
        })
    }

    pub fn with_structure(mut self, structure: NoiseStructure) -> Result<Self> {
        self.structure = NoiseStructure::new(
            structure.kind,
            structure.global_indices,
            structure.noise_indices,
            self.input_dim(),
        )?;
        Ok(self)
    }

    pub fn with_init_solver(
        mut self,
        solver: impl Fn(&Observation, u64) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.init_solver = Some(Box::new(solver));
        self
    }

    /// Marks the model as directed: `parameter_indices` are the inputs that
    /// generate the parameters, the rest simulate `y` given them.
    pub fn with_parameter_indices(mut self, indices: Vec<usize>) -> Self {
        self.parameter_indices = Some(indices);
        self
    }

    pub fn with_latent_names(mut self, names: Vec<String>) -> Self {
        debug_assert_eq!(names.len(), self.latent_dim());
        self.latent_names = names;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.g_y.input_dim()
    }

    pub fn observed_dim(&self) -> usize {
        self.g_y.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.g_z.output_dim()
    }

    pub fn g_y(&self) -> &dyn DiffFunction {
        self.g_y.as_ref()
    }

    pub fn g_z(&self) -> &dyn DiffFunction {
        self.g_z.as_ref()
    }

    pub fn base(&self) -> &dyn BaseDensity {
        self.base.as_ref()
    }

    pub fn structure(&self) -> &NoiseStructure {
        &self.structure
    }

    pub fn parameter_indices(&self) -> Option<&[usize]> {
        self.parameter_indices.as_deref()
    }

    pub fn latent_names(&self) -> &[String] {
        &self.latent_names
    }

    pub fn has_init_solver(&self) -> bool {
        self.init_solver.is_some()
    }

    pub fn log_rho(&self, u: &[f64]) -> f64 {
        self.base.log_density(u)
    }

    pub fn grad_log_rho(&self, u: &[f64]) -> Vec<f64> {
        self.base.gradient(u)
    }

    pub fn sample_inputs(&self, rng: &mut ChainRng) -> Vec<f64> {
        self.base.sample(self.input_dim(), rng)
    }

    pub fn observe(&self, u: &[f64]) -> Vec<f64> {
        self.g_y.evaluate(u)
    }

    pub fn latents(&self, u: &[f64]) -> Vec<f64> {
        self.g_z.evaluate(u)
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: u.len(),
            });
        }
        Ok(())
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.len() != self.observed_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.observed_dim(),
                found: obs.len(),
            });
        }
        Ok(())
    }
}

/// `c(u) = g_y(u) − ȳ`.
pub fn constraint(model: &GeneratorModel, obs: &Observation, u: &[f64]) -> Result<Vec<f64>> {
    model.check_input(u)?;
    model.check_observation(obs)?;
    let mut c = model.observe(u);
    for (ci, yi) in c.iter_mut().zip(obs.values()) {
        *ci -= yi;
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("generator output"));
    }
    Ok(c)
}

/// `J = ∂c/∂u` and `L = chol(J·Jᵀ)`, using the structured factorization when
/// the model declares one.
pub fn constraint_jacobian(
    model: &GeneratorModel,
    u: &[f64],
) -> Result<(DenseMatrix, LowerTriangular)> {
    model.check_input(u)?;
    let j = autodiff::jacobian(model.g_y(), u)?;
    let l = gram_factor(&j, model.structure())?;
    Ok((j, l))
}

/// Cholesky factor of `J·Jᵀ`, by the structured path when it applies and by
/// dense factorization otherwise.
pub fn gram_factor(j: &DenseMatrix, structure: &NoiseStructure) -> Result<LowerTriangular> {
    match structured_gram_factor(j, structure) {
        Some(l) => Ok(l),
        None => cholesky(&gram(j)),
    }
}

/// Factor of `J·Jᵀ = J_n·J_nᵀ + Σ_v J_v·J_vᵀ` built from the triangular noise
/// block with one rank-1 update per global column.
///
/// Returns `None` when the structure is dense, the noise block is not square,
/// or a diagonal entry of the noise block vanishes.
pub fn structured_gram_factor(j: &DenseMatrix, s: &NoiseStructure) -> Option<LowerTriangular> {
    let n = j.rows();
    if s.kind == StructureKind::Dense || s.noise_indices.len() != n {
        return None;
    }
    let mut l0 = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let col = s.noise_indices[k];
        let d = j[(k, col)];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let sign = d.signum();
        match s.kind {
            StructureKind::Elementwise => l0[(k, k)] = d * sign,
            _ => {
                for i in k..n {
                    l0[(i, k)] = j[(i, col)] * sign;
                }
            }
        }
    }
    let mut l = LowerTriangular::from_dense(l0).ok()?;
    let mut work = vec![0.0; n];
    for &g in &s.global_indices {
        for (i, w) in work.iter_mut().enumerate() {
            *w = j[(i, g)];
        }
        chol_rank1_update_in_place(&mut l, &mut work);
    }
    Some(l)
}

/// A point with `‖c(u)‖∞ ≤ tol`.
///
/// Each restart first tries the model's own solver when it has one, then a
/// damped minimum-norm Gauss–Newton iteration from a fresh draw of `ρ`, and
/// finally Newton on the `N_y` inputs whose Jacobian columns have the
/// largest norms.
pub fn find_initial(
    model: &GeneratorModel,
    obs: &Observation,
    seed: u64,
    tol: f64,
) -> Result<Vec<f64>> {
    find_initial_with_restarts(model, obs, seed, tol, DEFAULT_MAX_RESTARTS)
}

pub fn find_initial_with_restarts(
    model: &GeneratorModel,
    obs: &Observation,
    seed: u64,
    tol: f64,
    max_restarts: usize,
) -> Result<Vec<f64>> {
    model.check_observation(obs)?;
    for restart in 0..max_restarts {
        if let Some(solver) = &model.init_solver {
            if let Ok(u) = solver(obs, seed.wrapping_add(restart as u64)) {
                if satisfies(model, obs, &u, tol) {
                    return Ok(u);
                }
            }
        }
        let mut rng = chain_rng(seed, restart as u64);
        let u0 = model.sample_inputs(&mut rng);
        for attempt in [min_norm_newton, column_subset_newton] {
            if let Some(u) = attempt(model, obs, u0.clone(), tol) {
                if satisfies(model, obs, &u, tol) {
                    return Ok(u);
                }
            }
        }
    }
    Err(Error::InitializationFailed {
        restarts: max_restarts,
    })
}

fn satisfies(model: &GeneratorModel, obs: &Observation, u: &[f64], tol: f64) -> bool {
    constraint(model, obs, u).is_ok_and(|c| norm_inf(&c) <= tol)
}

const INIT_NEWTON_ITERS: usize = 100;

/// Backtracking on `‖c‖₂` along `−step`.
fn line_search(
    model: &GeneratorModel,
    obs: &Observation,
    u: &[f64],
    c: &[f64],
    step: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let base = norm2(c);
    let mut alpha = 1.0;
    while alpha > 1e-10 {
        let mut trial = u.to_vec();
        axpy(-alpha, step, &mut trial);
        if let Ok(ct) = constraint(model, obs, &trial) {
            if norm2(&ct) < base {
                return Some((trial, ct));
            }
        }
        alpha *= 0.5;
    }
    None
}

fn min_norm_newton(
    model: &GeneratorModel,
    obs: &Observation,
    mut u: Vec<f64>,
    tol: f64,
) -> Option<Vec<f64>> {
    let mut c = constraint(model, obs, &u).ok()?;
    for _ in 0..INIT_NEWTON_ITERS {
        if norm_inf(&c) <= tol {
            return Some(u);
        }
        let j = autodiff::jacobian(model.g_y(), &u).ok()?;
        let l = cholesky(&gram(&j)).ok()?;
        let lambda = cholesky_solve(&l, &c).ok()?;
        let step = j.matvec_transposed(&lambda).ok()?;
        (u, c) = line_search(model, obs, &u, &c, &step)?;
    }
    (norm_inf(&c) <= tol).then_some(u)
}

fn column_subset_newton(
    model: &GeneratorModel,
    obs: &Observation,
    mut u: Vec<f64>,
    tol: f64,
) -> Option<Vec<f64>> {
    let j0 = autodiff::jacobian(model.g_y(), &u).ok()?;
    let n = model.observed_dim();
    let mut order: Vec<usize> = (0..j0.cols()).collect();
    let norms: Vec<f64> = order.iter().map(|&k| norm2(&j0.column(k))).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let cols = &order[..n];
    let mut c = constraint(model, obs, &u).ok()?;
    for _ in 0..INIT_NEWTON_ITERS {
        if norm_inf(&c) <= tol {
            return Some(u);
        }
        let j = autodiff::jacobian(model.g_y(), &u).ok()?;
        let delta = Lu::factor(&j.select_columns(cols)).ok()?.solve(&c).ok()?;
        let mut step = vec![0.0; u.len()];
        for (&k, d) in cols.iter().zip(delta) {
            step[k] = d;
        }
        (u, c) = line_search(model, obs, &u, &c, &step)?;
    }
    (norm_inf(&c) <= tol).then_some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Scalar, ScalarFunction, Taped};

    struct Sum;

    impl ScalarFunction for Sum {
        fn input_dim(&self) -> usize {
            2
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
            vec![u[0] + u[1]]
        }
    }

    struct First(usize);

    impl ScalarFunction for First {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
            vec![u[0]]
        }
    }

    struct Pass(usize);

    impl ScalarFunction for Pass {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn output_dim(&self) -> usize {
            self.0
        }
        fn eval<T: Scalar>(&self, u: &[T]) -> Vec<T> {
            u.to_vec()
        }
    }

    fn sum_model() -> GeneratorModel {
        GeneratorModel::new(
            "sum",
            Box::new(Taped(Sum)),
            Box::new(Taped(First(2))),
            Box::new(StandardNormal::default()),
        )
        .unwrap()
    }

    #[test]
    fn constraint_examples() {
        let m = GeneratorModel::new(
            "first",
            Box::new(Taped(First(2))),
            Box::new(Taped(First(2))),
            Box::new(StandardNormal::default()),
        )
        .unwrap();
        let obs = Observation::new(vec![0.0], "zero").unwrap();
        assert_eq!(constraint(&m, &obs, &[0.0, 0.0]).unwrap(), vec![0.0]);
        let obs = Observation::new(vec![3.0], "three").unwrap();
        assert_eq!(constraint(&sum_model(), &obs, &[1.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_jacobian_has_identity_factor() {
        let m = GeneratorModel::new(
            "pass",
            Box::new(Taped(Pass(2))),
            Box::new(Taped(First(2))),
            Box::new(StandardNormal::default()),
        )
        .unwrap();
        let (j, l) = constraint_jacobian(&m, &[0.3, -0.2]).unwrap();
        assert_eq!(j, DenseMatrix::identity(2));
        assert_eq!(l.to_dense(), DenseMatrix::identity(2));
    }

    #[test]
    fn elementwise_structure_with_zero_globals_is_diagonal() {
        let j = DenseMatrix::from_rows(&[vec![0.0, -2.0, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        let s = NoiseStructure::new(StructureKind::Elementwise, vec![0], vec![1, 2], 3).unwrap();
        let l = structured_gram_factor(&j, &s).unwrap();
        assert_eq!(l.to_dense().as_slice(), &[2.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn structured_factor_matches_dense_on_triangular_noise() {
        let j = DenseMatrix::from_rows(&[
            vec![0.7, 1.0, 0.0, 0.0, -0.3],
            vec![-1.2, 0.4, -2.0, 0.0, 0.9],
            vec![0.5, 0.1, 0.8, 1.5, 2.0],
        ])
        .unwrap();
        let s = NoiseStructure::new(StructureKind::Autoregressive, vec![0, 4], vec![1, 2, 3], 5)
            .unwrap();
        let fast = structured_gram_factor(&j, &s).unwrap();
        let dense = cholesky(&gram(&j)).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert!((fast.get(i, k) - dense.get(i, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn structure_must_partition_inputs() {
        assert!(NoiseStructure::new(StructureKind::Elementwise, vec![0], vec![0], 2).is_err());
        assert!(NoiseStructure::new(StructureKind::Elementwise, vec![0], vec![], 2).is_err());
        assert!(NoiseStructure::new(StructureKind::Dense, vec![], vec![], 2).is_ok());
    }

    #[test]
    fn one_newton_step_on_linear_sum() {
        let m = sum_model();
        let obs = Observation::new(vec![3.0], "three").unwrap();
        let mut rng = chain_rng(11, 0);
        let u0 = m.sample_inputs(&mut rng);
        let (a, b) = (u0[0], u0[1]);
        let u = find_initial(&m, &obs, 11, 1e-12).unwrap();
        let shift = (3.0 - a - b) / 2.0;
        assert!((u[0] - (a + shift)).abs() < 1e-12);
        assert!((u[1] - (b + shift)).abs() < 1e-12);
    }

    #[test]
    fn unreachable_observation_fails_to_initialize() {
        struct Square;
        impl ScalarFunction for Square {
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
        let m = GeneratorModel::new(
            "sq",
            Box::new(Taped(Square)),
            Box::new(Taped(First(2))),
            Box::new(StandardNormal::default()),
        )
        .unwrap();
        let obs = Observation::new(vec![-1.0], "neg").unwrap();
        assert_eq!(
            find_initial_with_restarts(&m, &obs, 0, 1e-9, 3),
            Err(Error::InitializationFailed { restarts: 3 })
        );
    }

    #[test]
    fn observation_round_trip() {
        let obs = Observation::new(vec![0.1, -2.5e-8, 1e300, 3.0], "x").unwrap();
        let back = Observation::parse(&obs.to_csv(), "x").unwrap();
        assert_eq!(obs, back);
        assert!(matches!(
            Observation::parse("1.0\nabc\n", "bad"),
            Err(Error::InvalidConfig(msg)) if msg.starts_with("line 2")
        ));
    }
}
