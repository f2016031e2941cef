//! Constrained Hamiltonian Monte Carlo on the manifold `c(u) = 0`.
//!
//! Each transition integrates the constrained dynamic with a geodesic
//! splitting: a momentum kick from `∇log π`, then `N_g` small steps of free
//! motion, each projected back onto the manifold (positions by a
//! quasi-Newton iteration, momenta onto the tangent space). A Metropolis test
//! on the Hamiltonian corrects the discretisation error, and the momentum is
//! refreshed from a projected standard normal afterwards.

use std::time::Instant;

use crate::autodiff;
use crate::chain::{SampleChain, TransitionRecord};
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, cholesky_solve, dot, norm2, norm_inf, DenseMatrix, LowerTriangular, Lu,
};
use crate::model::{constraint, constraint_jacobian, find_initial, GeneratorModel, Observation};
use crate::rng::{standard_normal_vec, uniform, ChainRng};
use crate::target::{grad_log_target, log_pi_from_factor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Integrator step `δt`. Zero turns every proposal into the current state.
    pub dt: f64,
    pub n_steps: usize,
    pub n_geodesic: usize,
    /// Projection tolerance on `‖c(u)‖∞`.
    pub eps_proj: f64,
    pub max_newton_iters: usize,
    pub max_fallback_iters: usize,
    /// Reject steps whose projection cannot be retraced backwards.
    pub check_reversibility: bool,
    /// Allowed `‖u_back − u‖∞` in the reversibility check, as a multiple of
    /// `eps_proj`.
    pub reversibility_factor: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            n_steps: 10,
            n_geodesic: 5,
            eps_proj: 1e-9,
            max_newton_iters: 50,
            max_fallback_iters: 100,
            check_reversibility: true,
            reversibility_factor: 10.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return bad("dt must be finite and non-negative");
        }
        if self.n_steps == 0 || self.n_geodesic == 0 {
            return bad("n_steps and n_geodesic must be at least 1");
        }
        if !(self.eps_proj > 0.0 && self.eps_proj <= 1e-6) {
            return bad("eps_proj must lie in (0, 1e-6]");
        }
        if self.max_newton_iters == 0 || self.max_fallback_iters == 0 {
            return bad("iteration caps must be at least 1");
        }
        if !(self.reversibility_factor >= 1.0) {
            return bad("reversibility_factor must be at least 1");
        }
        Ok(())
    }
}

/// A point on the manifold with tangent momentum and cached derivatives.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub jacobian: DenseMatrix,
    pub factor: LowerTriangular,
    pub log_pi: f64,
    grad: Option<Vec<f64>>,
}

impl ChainState {
    /// State at `u` with momentum `p` projected onto the tangent space.
    pub fn new(model: &GeneratorModel, u: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let (jacobian, factor) = constraint_jacobian(model, &u)?;
        let p = project_momentum(&p, &jacobian, &factor);
        let log_pi = log_pi_from_factor(model, &u, &factor);
        Ok(Self {
            u,
            p,
            jacobian,
            factor,
            log_pi,
            grad: None,
        })
    }

    pub fn hamiltonian(&self) -> f64 {
        -self.log_pi + 0.5 * dot(&self.p, &self.p)
    }

    fn gradient(&mut self, model: &GeneratorModel) -> Result<&[f64]> {
        if self.grad.is_none() {
            self.grad = Some(grad_log_target(model, &self.u, &self.jacobian, &self.factor)?);
        }
        Ok(self.grad.as_deref().expect("just computed"))
    }

    fn kick(&mut self, model: &GeneratorModel, h: f64) -> Result<()> {
        let g = self.gradient(model)?.to_vec();
        axpy(h, &g, &mut self.p);
        self.p = project_momentum(&self.p, &self.jacobian, &self.factor);
        Ok(())
    }

    /// `‖J·p‖∞ / (1 + ‖p‖)`.
    pub fn tangency_residual(&self) -> f64 {
        let jp = self.jacobian.matvec(&self.p).expect("dimensions are consistent");
        norm_inf(&jp) / (1.0 + norm2(&self.p))
    }
}

/// `p − Jᵀ·(J·Jᵀ)⁻¹·J·p`, with one refinement pass when rounding leaves a
/// visible normal component.
pub fn project_momentum(p: &[f64], j: &DenseMatrix, l: &LowerTriangular) -> Vec<f64> {
    let remove = |p: &mut Vec<f64>, jp: &[f64]| {
        let lambda = cholesky_solve(l, jp).expect("factor matches the Jacobian");
        axpy(-1.0, &j.matvec_transposed(&lambda).expect("dimensions agree"), p);
    };
    let mut out = p.to_vec();
    remove(&mut out, &j.matvec(p).expect("momentum has input dimension"));
    let resid = j.matvec(&out).expect("momentum has input dimension");
    if norm_inf(&resid) > 1e-12 * (1.0 + norm2(p)) {
        remove(&mut out, &resid);
    }
    out
}

/// Outcome of a position projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub u: Vec<f64>,
    pub iters: usize,
    pub fallback_used: bool,
}

/// Finds `u = ũ − J_prevᵀ·λ` with `‖c(u)‖∞ ≤ ε`.
///
/// The quasi-Newton iteration `λ += (J_prev·J_prevᵀ)⁻¹·c(u)` keeps the
/// conditioner fixed. If it stalls, or the residual more than doubles in one
/// iteration, a damped Newton iteration on `λ` with the current Jacobian and
/// a backtracking line search takes over from the best iterate so far.
pub fn project_position(
    u_tilde: &[f64],
    j_prev: &DenseMatrix,
    l_prev: &LowerTriangular,
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
) -> Result<Projection> {
    let n = j_prev.rows();
    let mut lambda = vec![0.0; n];
    let mut u = u_tilde.to_vec();
    let mut c = constraint(model, obs, &u)?;
    let mut norm = norm_inf(&c);
    let mut best = (norm, lambda.clone());
    let mut iters = 0;
    while iters < cfg.max_newton_iters {
        if norm <= cfg.eps_proj {
            return Ok(Projection {
                u,
                iters,
                fallback_used: false,
            });
        }
        let delta = cholesky_solve(l_prev, &c)?;
        axpy(1.0, &delta, &mut lambda);
        axpy(-1.0, &j_prev.matvec_transposed(&delta)?, &mut u);
        iters += 1;
        c = match constraint(model, obs, &u) {
            Ok(c) => c,
            Err(_) => break,
        };
        let next = norm_inf(&c);
        if next < best.0 {
            best = (next, lambda.clone());
        }
        if next > 2.0 * norm {
            break;
        }
        norm = next;
    }
    if norm <= cfg.eps_proj {
        return Ok(Projection {
            u,
            iters,
            fallback_used: false,
        });
    }
    let (u, extra) = newton_fallback(u_tilde, j_prev, best.1, model, obs, cfg)?;
    Ok(Projection {
        u,
        iters: iters + extra,
        fallback_used: true,
    })
}

fn newton_fallback(
    u_tilde: &[f64],
    j_prev: &DenseMatrix,
    mut lambda: Vec<f64>,
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
) -> Result<(Vec<f64>, usize)> {
    let jt_prev = j_prev.transpose();
    let position = |lambda: &[f64]| {
        let mut u = u_tilde.to_vec();
        axpy(-1.0, &j_prev.matvec_transposed(lambda).expect("λ has N_y entries"), &mut u);
        u
    };
    let mut u = position(&lambda);
    let mut c = constraint(model, obs, &u)?;
    for it in 0..cfg.max_fallback_iters {
        if norm_inf(&c) <= cfg.eps_proj {
            return Ok((u, it));
        }
        let j = autodiff::jacobian(model.g_y(), &u)?;
        let k = j.matmul(&jt_prev)?;
        let delta = Lu::factor(&k)?.solve(&c)?;
        let base = norm2(&c);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-9 {
            let mut trial = lambda.clone();
            axpy(alpha, &delta, &mut trial);
            let ut = position(&trial);
            if let Ok(ct) = constraint(model, obs, &ut) {
                if norm2(&ct) < (1.0 - 1e-4 * alpha) * base {
                    (lambda, u, c) = (trial, ut, ct);
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if norm_inf(&c) <= cfg.eps_proj {
        return Ok((u, cfg.max_fallback_iters));
    }
    Err(Error::ProjectionFailed {
        residual: norm_inf(&c),
    })
}

/// Counters accumulated over one trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrajectoryStats {
    pub projection_iters: usize,
    pub fallback_used: bool,
    pub nonreversible: bool,
}

/// `N_g` projected free-motion sub-steps of total duration `δt`.
pub fn simulate_geodesic(
    state: &ChainState,
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
    stats: &mut TrajectoryStats,
) -> Result<ChainState> {
    let mut s = state.clone();
    if cfg.dt == 0.0 {
        return Ok(s);
    }
    let h = cfg.dt / cfg.n_geodesic as f64;
    for _ in 0..cfg.n_geodesic {
        let mut u_tilde = s.u.clone();
        axpy(h, &s.p, &mut u_tilde);
        let proj = project_position(&u_tilde, &s.jacobian, &s.factor, model, obs, cfg)?;
        stats.projection_iters += proj.iters;
        stats.fallback_used |= proj.fallback_used;
        let (j, l) = constraint_jacobian(model, &proj.u)?;
        let mut p: Vec<f64> = proj.u.iter().zip(&s.u).map(|(a, b)| (a - b) / h).collect();
        p = project_momentum(&p, &j, &l);
        if cfg.check_reversibility {
            let mut back = proj.u.clone();
            axpy(-h, &p, &mut back);
            let returned = project_position(&back, &j, &l, model, obs, cfg);
            let distance = match returned {
                Ok(r) => r.u.iter().zip(&s.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
                Err(_) => f64::INFINITY,
            };
            if !(distance <= cfg.reversibility_factor * cfg.eps_proj) {
                stats.nonreversible = true;
                return Err(Error::NonReversible { distance });
            }
        }
        s.u = proj.u;
        s.p = p;
        s.jacobian = j;
        s.factor = l;
    }
    s.log_pi = log_pi_from_factor(model, &s.u, &s.factor);
    s.grad = None;
    Ok(s)
}

/// Runs the `N_s`-step integrator from `state` and returns the end state with
/// `ΔH = H(end) − H(start)`.
pub fn simulate_dynamic(
    state: &ChainState,
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
    stats: &mut TrajectoryStats,
) -> Result<(ChainState, f64)> {
    if cfg.dt == 0.0 {
        return Ok((state.clone(), 0.0));
    }
    let h0 = state.hamiltonian();
    let mut s = state.clone();
    s.kick(model, 0.5 * cfg.dt)?;
    for k in 0..cfg.n_steps {
        s = simulate_geodesic(&s, model, obs, cfg, stats)?;
        let h = if k + 1 == cfg.n_steps { 0.5 * cfg.dt } else { cfg.dt };
        s.kick(model, h)?;
    }
    let delta_h = s.hamiltonian() - h0;
    if !delta_h.is_finite() {
        return Err(Error::NonFinite("Hamiltonian"));
    }
    Ok((s, delta_h))
}

/// One Metropolis-corrected transition followed by a momentum refresh.
pub fn step(
    state: ChainState,
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
    rng: &mut ChainRng,
) -> (ChainState, TransitionRecord) {
    let mut stats = TrajectoryStats::default();
    let proposal = simulate_dynamic(&state, model, obs, cfg, &mut stats);
    let r = uniform(rng);
    let mut record = TransitionRecord {
        projection_iters: stats.projection_iters,
        fallback_used: stats.fallback_used,
        nonreversible_rejected: stats.nonreversible,
        ..Default::default()
    };
    let mut next = match proposal {
        Ok((prop, dh)) => {
            record.delta_h = dh;
            if r < (-dh).exp() {
                record.accepted = true;
                prop
            } else {
                state
            }
        }
        Err(e) => {
            record.delta_h = f64::INFINITY;
            record.projection_failed = matches!(e, Error::ProjectionFailed { .. });
            state
        }
    };
    let n = standard_normal_vec(rng, next.u.len());
    next.p = project_momentum(&n, &next.jacobian, &next.factor);
    record.constraint_residual = constraint(model, obs, &next.u)
        .map(|c| norm_inf(&c))
        .unwrap_or(f64::INFINITY);
    record.tangency_residual = next.tangency_residual();
    (next, record)
}

/// Starts at [`find_initial`] and stores `n_samples` states after `burn_in`
/// transitions.
pub fn run_chain(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
    n_samples: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    let start = Instant::now();
    let u0 = find_initial(model, obs, cfg.seed, cfg.eps_proj)?;
    run_chain_from(model, obs, cfg, u0, n_samples, burn_in, rng).map(|mut chain| {
        chain.wall_seconds = start.elapsed().as_secs_f64();
        chain
    })
}

/// As [`run_chain`], from a given point on the manifold.
pub fn run_chain_from(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &SamplerConfig,
    u0: Vec<f64>,
    n_samples: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    let start = Instant::now();
    let p0 = standard_normal_vec(rng, u0.len());
    let mut state = ChainState::new(model, u0, p0)?;
    let mut chain = SampleChain::new("chmc", model.latent_names().to_vec());
    for i in 0..burn_in + n_samples {
        let (next, record) = step(state, model, obs, cfg, rng);
        state = next;
        if i >= burn_in {
            chain.latents.push(model.latents(&state.u));
            chain.inputs.push(state.u.clone());
            chain.accepted.push(record.accepted);
            chain.delta_h.push(record.delta_h);
            chain.accepted_count += record.accepted as usize;
            chain.proposals += 1;
            chain.records.push(record);
        }
    }
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}
