//! Sampler output shared by every method.

/// Per-transition diagnostics of a constrained HMC update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransitionRecord {
    pub accepted: bool,
    /// `H(proposal) − H(current)`; infinite when the proposal failed.
    pub delta_h: f64,
    pub projection_iters: usize,
    pub fallback_used: bool,
    pub nonreversible_rejected: bool,
    pub projection_failed: bool,
    /// `‖c(u)‖∞` of the state kept after the transition.
    pub constraint_residual: f64,
    /// `‖J·p‖∞ / (1 + ‖p‖)` of the refreshed momentum.
    pub tangency_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SampleChain {
    pub method: String,
    pub latent_names: Vec<String>,
    /// Stored inputs `u`; empty for methods that only report latents.
    pub inputs: Vec<Vec<f64>>,
    /// `z = g_z(u)` for every stored sample.
    pub latents: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    /// `NaN` for methods without a Hamiltonian.
    pub delta_h: Vec<f64>,
    /// Importance weights, when the method produces them.
    pub weights: Option<Vec<f64>>,
    pub records: Vec<TransitionRecord>,
    /// Number of proposals or prior draws made after burn-in.
    pub proposals: usize,
    pub accepted_count: usize,
    pub wall_seconds: f64,
}

impl SampleChain {
    pub fn new(method: impl Into<String>, latent_names: Vec<String>) -> Self {
        Self {
            method: method.into(),
            latent_names,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn accept_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.proposals as f64
        }
    }

    /// Series of latent coordinate `k`.
    pub fn latent_series(&self, k: usize) -> Vec<f64> {
        self.latents.iter().map(|z| z[k]).collect()
    }

    /// Series of input coordinate `k`.
    pub fn input_series(&self, k: usize) -> Vec<f64> {
        self.inputs.iter().map(|u| u[k]).collect()
    }
}
