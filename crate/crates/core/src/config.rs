//! Experiment configuration files.
//!
//! Configs are TOML with one table per concern:
//!
//! ```toml
//! [model]
//! name = "lotka_volterra"   # linear_gaussian | circle | toy1d | lotka_volterra
//! steps = 25
//!
//! [observation]
//! source = "simulate:1"     # or a path to a one-value-per-line CSV
//!
//! [method]
//! name = "chmc"             # chmc | abc-reject | abc-mcmc | abc-input | abc-slice
//!
//! [chmc]
//! dt = 0.1
//!
//! [abc]
//! kernel = "uniform"        # uniform | gaussian
//! epsilon = 100.0           # inf is accepted
//!
//! [run]
//! n_samples = 1000
//! seed = 1
//! ```
//!
//! Unknown keys are errors. Every key outside `[model] name` and
//! `[method] name` has a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::abc::{AbcConfig, AbcKernel, KernelKind};
use crate::autodiff::DiffMode;
use crate::chmc::SamplerConfig;
use crate::error::{Error, Result};
use crate::model::{GeneratorModel, Observation};
use crate::models::{
    circle_model, linear_gaussian_model, lotka_volterra_model_with, lotka_volterra_truth,
    toy1d_model, LotkaVolterraSpec, LV_TRUE_PARAMETERS,
};
use crate::rng::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Method {
    #[serde(rename = "chmc")]
    Chmc,
    #[serde(rename = "abc-reject")]
    AbcReject,
    #[serde(rename = "abc-mcmc")]
    AbcMcmc,
    #[serde(rename = "abc-input")]
    AbcInput,
    #[serde(rename = "abc-slice")]
    AbcSlice,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Chmc => "chmc",
            Method::AbcReject => "abc-reject",
            Method::AbcMcmc => "abc-mcmc",
            Method::AbcInput => "abc-input",
            Method::AbcSlice => "abc-slice",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    /// Lotka–Volterra: number of Euler–Maruyama steps.
    pub steps: Option<usize>,
    /// Lotka–Volterra: simulation time step.
    pub dt: Option<f64>,
    pub y0: Option<[f64; 2]>,
    pub prior_mu: Option<f64>,
    pub prior_sigma: Option<f64>,
    /// Lotka–Volterra: rates used by `simulate:` observations.
    pub parameters: Option<[f64; 4]>,
    /// Lotka–Volterra: `analytic`, `taped` or `forward`.
    pub derivatives: Option<String>,
    /// Linear-Gaussian: output weights.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    #[serde(default = "default_source")]
    pub source: String,
    /// Inline observation; overrides `source`.
    pub values: Option<Vec<f64>>,
    /// Optional `truth_z.csv` from `dgm simulate`, for error columns.
    pub truth: Option<PathBuf>,
}

fn default_source() -> String {
    "simulate:0".into()
}

impl Default for ObservationSection {
    fn default() -> Self {
        Self {
            source: default_source(),
            values: None,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: Method,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChmcSection {
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_geodesic: Option<usize>,
    pub eps_proj: Option<f64>,
    pub max_newton_iters: Option<usize>,
    pub max_fallback_iters: Option<usize>,
    pub check_reversibility: Option<bool>,
    pub reversibility_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    pub kernel: Option<String>,
    pub epsilon: Option<f64>,
    pub proposal_scale: Option<f64>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_n_samples() -> usize {
    1000
}

fn default_burn_in() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_samples: default_n_samples(),
            burn_in: default_burn_in(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub observation: ObservationSection,
    pub method: MethodSection,
    #[serde(default)]
    pub chmc: ChmcSection,
    #[serde(default)]
    pub abc: AbcSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Observation plus the latents that generated it, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedObservation {
    pub observation: Observation,
    pub truth_inputs: Option<Vec<f64>>,
    pub truth_latents: Option<Vec<f64>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => Error::InvalidConfig(format!("line {}: {msg}", line_of(text, span.start))),
                None => Error::InvalidConfig(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.n_samples == 0 {
            return Err(Error::InvalidConfig("run.n_samples must be at least 1".into()));
        }
        self.lotka_volterra_spec()?;
        self.diff_mode()?;
        match self.method.name {
            Method::Chmc => self.sampler_config().validate(),
            _ => self.abc_config()?.validate(),
        }
    }

    pub fn lotka_volterra_spec(&self) -> Result<LotkaVolterraSpec> {
        let d = LotkaVolterraSpec::default();
        let m = &self.model;
        let spec = LotkaVolterraSpec {
            n_steps: m.steps.unwrap_or(d.n_steps),
            dt_sim: m.dt.unwrap_or(d.dt_sim),
            y0: m.y0.unwrap_or(d.y0),
            prior_mu: m.prior_mu.unwrap_or(d.prior_mu),
            prior_sigma: m.prior_sigma.unwrap_or(d.prior_sigma),
        };
        if m.name == "lotka_volterra" {
            spec.validate()?;
        }
        Ok(spec)
    }

    fn diff_mode(&self) -> Result<DiffMode> {
        match self.model.derivatives.as_deref() {
            None | Some("analytic") => Ok(DiffMode::AnalyticClosures),
            Some("taped") => Ok(DiffMode::TapedReverse),
            Some("forward") => Ok(DiffMode::ForwardDual),
            Some(other) => Err(Error::InvalidConfig(format!(
                "model.derivatives: unknown engine {other:?}"
            ))),
        }
    }

    pub fn build_model(&self) -> Result<GeneratorModel> {
        match self.model.name.as_str() {
            "linear_gaussian" => {
                linear_gaussian_model(self.model.weights.as_deref().unwrap_or(&[1.0, 1.0]))
            }
            "circle" => Ok(circle_model()),
            "toy1d" => Ok(toy1d_model()),
            "lotka_volterra" => lotka_volterra_model_with(self.lotka_volterra_spec()?, self.diff_mode()?),
            other => Err(Error::InvalidConfig(format!(
                "model.name: unknown model {other:?} (expected linear_gaussian, circle, toy1d or lotka_volterra)"
            ))),
        }
    }

    /// Simulates or reads the observation. `seed_override` replaces the
    /// seed of a `simulate:` source.
    pub fn resolve_observation(
        &self,
        model: &GeneratorModel,
        base_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<ResolvedObservation> {
        let o = &self.observation;
        let mut resolved = if let Some(values) = &o.values {
            ResolvedObservation {
                observation: Observation::new(values.clone(), "inline")?,
                truth_inputs: None,
                truth_latents: None,
            }
        } else if let Some(seed) = o.source.strip_prefix("simulate:") {
            let seed: u64 = seed.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("observation.source: bad seed in {:?}", o.source))
            })?;
            simulate_truth(self, model, seed_override.unwrap_or(seed))?
        } else {
            let path = base_dir.join(&o.source);
            ResolvedObservation {
                observation: Observation::read(&path)?,
                truth_inputs: None,
                truth_latents: None,
            }
        };
        if resolved.observation.len() != model.observed_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.observed_dim(),
                found: resolved.observation.len(),
            });
        }
        if let Some(path) = &o.truth {
            resolved.truth_latents = Some(read_named_values(&base_dir.join(path))?);
        }
        Ok(resolved)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let d = SamplerConfig::default();
        let c = &self.chmc;
        SamplerConfig {
            dt: c.dt.unwrap_or(d.dt),
            n_steps: c.n_steps.unwrap_or(d.n_steps),
            n_geodesic: c.n_geodesic.unwrap_or(d.n_geodesic),
            eps_proj: c.eps_proj.unwrap_or(d.eps_proj),
            max_newton_iters: c.max_newton_iters.unwrap_or(d.max_newton_iters),
            max_fallback_iters: c.max_fallback_iters.unwrap_or(d.max_fallback_iters),
            check_reversibility: c.check_reversibility.unwrap_or(d.check_reversibility),
            reversibility_factor: c.reversibility_factor.unwrap_or(d.reversibility_factor),
            seed: self.run.seed,
        }
    }

    pub fn abc_config(&self) -> Result<AbcConfig> {
        let d = AbcConfig::default();
        let a = &self.abc;
        let kind = match a.kernel.as_deref() {
            None | Some("uniform") => KernelKind::UniformBall,
            Some("gaussian") => KernelKind::Gaussian,
            Some(other) => {
                return Err(Error::InvalidConfig(format!("abc.kernel: unknown kernel {other:?}")))
            }
        };
        Ok(AbcConfig {
            kernel: AbcKernel::new(kind, a.epsilon.unwrap_or(d.kernel.epsilon))?,
            proposal_scale: a.proposal_scale.unwrap_or(d.proposal_scale),
            budget: a.budget.unwrap_or(d.budget),
            seed: self.run.seed,
        })
    }
}

/// Ground truth for a `simulate:<seed>` observation. Lotka–Volterra uses the
/// configured rates; other models draw every input from the base density.
pub fn simulate_truth(
    cfg: &ExperimentConfig,
    model: &GeneratorModel,
    seed: u64,
) -> Result<ResolvedObservation> {
    let (u, observation) = if cfg.model.name == "lotka_volterra" {
        let spec = cfg.lotka_volterra_spec()?;
        lotka_volterra_truth(&spec, &cfg.model.parameters.unwrap_or(LV_TRUE_PARAMETERS), seed)?
    } else {
        let u = model.sample_inputs(&mut chain_rng(seed, 0));
        let y = model.observe(&u);
        (u, Observation::new(y, format!("{} seed={seed}", model.name()))?)
    };
    Ok(ResolvedObservation {
        truth_latents: Some(model.latents(&u)),
        truth_inputs: Some(u),
        observation,
    })
}

/// Reads the `name,value` CSV written for the true latents.
pub fn read_named_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.rsplit(',').next().and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                Error::InvalidConfig(format!("{}: line {}: expected name,value", path.display(), n + 1))
            })
        })
        .collect()
}
