//! Approximate Bayesian computation baselines.
//!
//! All four samplers replace the exact constraint `g_y(u) = ȳ` with a kernel
//! `k_ε(ȳ; g_y(u))`:
//!
//! * [`abc_reject`] draws from the prior and keeps (or weights) the draws,
//! * [`abc_mcmc`] runs a random walk on the parameter inputs and simulates
//!   fresh noise for each proposal,
//! * [`abc_input_space_mcmc`] runs a random walk on all inputs at once,
//! * [`abc_slice_mcmc`] alternates elliptical slice updates of the parameter
//!   and noise blocks.

use std::time::Instant;

use crate::chain::SampleChain;
use crate::error::{Error, Result};
use crate::model::{find_initial, GeneratorModel, Observation};
use crate::rng::{standard_normal_vec, uniform, ChainRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `𝕀[‖y − ȳ‖₂ < ε]`.
    UniformBall,
    /// `N(ȳ; y, ε²I)`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcKernel {
    pub kind: KernelKind,
    /// Tolerance; `f64::INFINITY` makes the kernel constant.
    pub epsilon: f64,
}

impl AbcKernel {
    pub fn new(kind: KernelKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(Self { kind, epsilon })
    }

    /// Log-kernel up to an additive constant that depends only on `ε`.
    pub fn log_kernel(&self, y: &[f64], obs: &[f64]) -> f64 {
        let d2: f64 = y.iter().zip(obs).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2.is_nan() {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            KernelKind::UniformBall => {
                if d2.sqrt() < self.epsilon {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KernelKind::Gaussian => {
                if self.epsilon.is_infinite() {
                    0.0
                } else {
                    -0.5 * d2 / (self.epsilon * self.epsilon)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcConfig {
    pub kernel: AbcKernel,
    /// Random-walk step for the MCMC variants.
    pub proposal_scale: f64,
    /// Prior draws for [`abc_reject`].
    pub budget: usize,
    pub seed: u64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            kernel: AbcKernel {
                kind: KernelKind::UniformBall,
                epsilon: 1.0,
            },
            proposal_scale: 0.1,
            budget: 100_000,
            seed: 0,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::InvalidConfig("proposal_scale must be positive".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Prior draws filtered (uniform ball) or weighted (Gaussian) by the kernel.
///
/// For the uniform ball the returned latents are the accepted draws only; an
/// empty result is not an error and shows up as `accepted_count == 0`. For
/// the Gaussian kernel every draw is returned with its normalized weight.
pub fn abc_reject(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &AbcConfig,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    let start = Instant::now();
    let mut chain = SampleChain::new("abc-reject", model.latent_names().to_vec());
    let mut log_w = Vec::new();
    for _ in 0..cfg.budget {
        let u = model.sample_inputs(rng);
        let lk = cfg.kernel.log_kernel(&model.observe(&u), obs.values());
        let keep = lk > f64::NEG_INFINITY;
        chain.proposals += 1;
        chain.accepted_count += keep as usize;
        match cfg.kernel.kind {
            KernelKind::UniformBall if keep => {
                chain.latents.push(model.latents(&u));
                chain.accepted.push(true);
                chain.delta_h.push(f64::NAN);
            }
            KernelKind::Gaussian => {
                chain.latents.push(model.latents(&u));
                chain.accepted.push(keep);
                chain.delta_h.push(f64::NAN);
                log_w.push(lk);
            }
            _ => {}
        }
    }
    if cfg.kernel.kind == KernelKind::Gaussian {
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        chain.weights = Some(w.into_iter().map(|x| x / total).collect());
    }
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// `log ρ` of `u` with its `block` coordinates replaced by `values`.
fn log_rho_with(model: &GeneratorModel, u: &[f64], block: &[usize], values: &[f64]) -> f64 {
    let mut v = u.to_vec();
    for (&i, &x) in block.iter().zip(values) {
        v[i] = x;
    }
    model.log_rho(&v)
}

fn push_state(chain: &mut SampleChain, model: &GeneratorModel, u: &[f64], accepted: bool) {
    chain.latents.push(model.latents(u));
    chain.inputs.push(u.to_vec());
    chain.accepted.push(accepted);
    chain.delta_h.push(f64::NAN);
    chain.accepted_count += accepted as usize;
    chain.proposals += 1;
}

fn start_point(model: &GeneratorModel, obs: &Observation, cfg: &AbcConfig) -> Result<Vec<f64>> {
    find_initial(model, obs, cfg.seed, 1e-9)
}

/// Random walk on the parameter inputs with the rest re-simulated from the
/// base density at every proposal. Needs a directed model.
pub fn abc_mcmc(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &AbcConfig,
    n_samples: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    let params = model
        .parameter_indices()
        .ok_or(Error::Unsupported("latent-space ABC-MCMC without parameter inputs"))?
        .to_vec();
    let start = Instant::now();
    let mut u = start_point(model, obs, cfg)?;
    let mut lk = cfg.kernel.log_kernel(&model.observe(&u), obs.values());
    let mut chain = SampleChain::new("abc-mcmc", model.latent_names().to_vec());
    for i in 0..burn_in + n_samples {
        let mut prop = model.sample_inputs(rng);
        let step = standard_normal_vec(rng, params.len());
        let current: Vec<f64> = params.iter().map(|&k| u[k]).collect();
        let moved: Vec<f64> = current
            .iter()
            .zip(&step)
            .map(|(x, s)| x + cfg.proposal_scale * s)
            .collect();
        // prior ratio on the parameters, evaluated against the fresh noise
        let log_prior_ratio = log_rho_with(model, &prop, &params, &moved)
            - log_rho_with(model, &prop, &params, &current);
        for (&k, &x) in params.iter().zip(&moved) {
            prop[k] = x;
        }
        let lk_prop = cfg.kernel.log_kernel(&model.observe(&prop), obs.values());
        let accept = uniform(rng).ln() < lk_prop - lk + log_prior_ratio;
        if accept {
            u = prop;
            lk = lk_prop;
        }
        if i >= burn_in {
            push_state(&mut chain, model, &u, accept);
        }
    }
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// Random-walk Metropolis on all inputs targeting `k_ε(ȳ; g_y(u))·ρ(u)`.
pub fn abc_input_space_mcmc(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &AbcConfig,
    n_samples: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    let start = Instant::now();
    let mut u = start_point(model, obs, cfg)?;
    let mut log_target = cfg.kernel.log_kernel(&model.observe(&u), obs.values()) + model.log_rho(&u);
    let mut chain = SampleChain::new("abc-input", model.latent_names().to_vec());
    for i in 0..burn_in + n_samples {
        let step = standard_normal_vec(rng, u.len());
        let prop: Vec<f64> = u
            .iter()
            .zip(&step)
            .map(|(x, s)| x + cfg.proposal_scale * s)
            .collect();
        let lt = cfg.kernel.log_kernel(&model.observe(&prop), obs.values()) + model.log_rho(&prop);
        let accept = uniform(rng).ln() < lt - log_target;
        if accept {
            u = prop;
            log_target = lt;
        }
        if i >= burn_in {
            push_state(&mut chain, model, &u, accept);
        }
    }
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// Bracket shrinks allowed before an elliptical slice update gives up and
/// keeps the current block.
const MAX_SHRINKS: usize = 200;

/// Elliptical slice update of the `block` coordinates of `u`, whose prior is
/// standard normal. Returns whether the block moved.
fn elliptical_slice_update(
    model: &GeneratorModel,
    obs: &Observation,
    kernel: &AbcKernel,
    u: &mut [f64],
    log_lik: &mut f64,
    block: &[usize],
    rng: &mut ChainRng,
) -> bool {
    let nu = standard_normal_vec(rng, block.len());
    let threshold = *log_lik + uniform(rng).ln();
    let mut theta = uniform(rng) * std::f64::consts::TAU;
    let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
    let current: Vec<f64> = block.iter().map(|&k| u[k]).collect();
    let mut prop = u.to_vec();
    for _ in 0..MAX_SHRINKS {
        let (s, c) = theta.sin_cos();
        for ((&k, &x), &n) in block.iter().zip(&current).zip(&nu) {
            prop[k] = x * c + n * s;
        }
        let ll = kernel.log_kernel(&model.observe(&prop), obs.values());
        if ll > threshold {
            u.copy_from_slice(&prop);
            *log_lik = ll;
            return true;
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        theta = lo + uniform(rng) * (hi - lo);
    }
    false
}

/// Alternating elliptical slice updates of the parameter inputs and the
/// remaining inputs, with the kernel as the likelihood. The base density
/// must be a standard normal; the chain starts from an exact manifold point.
pub fn abc_slice_mcmc(
    model: &GeneratorModel,
    obs: &Observation,
    cfg: &AbcConfig,
    n_samples: usize,
    burn_in: usize,
    rng: &mut ChainRng,
) -> Result<SampleChain> {
    cfg.validate()?;
    if !model.base().is_standard_normal() {
        return Err(Error::Unsupported("elliptical slice sampling under a non-Gaussian base"));
    }
    let m = model.input_dim();
    let blocks: Vec<Vec<usize>> = match model.parameter_indices() {
        Some(p) if !p.is_empty() && p.len() < m => {
            let rest = (0..m).filter(|k| !p.contains(k)).collect();
            vec![p.to_vec(), rest]
        }
        _ => vec![(0..m).collect()],
    };
    let start = Instant::now();
    let mut u = start_point(model, obs, cfg)?;
    let mut ll = cfg.kernel.log_kernel(&model.observe(&u), obs.values());
    let mut chain = SampleChain::new("abc-slice", model.latent_names().to_vec());
    for i in 0..burn_in + n_samples {
        let mut moved = false;
        for block in &blocks {
            moved |= elliptical_slice_update(model, obs, &cfg.kernel, &mut u, &mut ll, block, rng);
        }
        if i >= burn_in {
            push_state(&mut chain, model, &u, moved);
        }
    }
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}
