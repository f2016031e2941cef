//! C interface to the sampler.
//!
//! Models and chains are opaque handles released with the matching
//! `*_free` call. Every fallible call returns a
//! [`DgmStatus`]; on failure the message is kept per thread and can be read
//! with [`dgm_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use dgm_core::chain::SampleChain;
use dgm_core::chmc::{run_chain, SamplerConfig};
use dgm_core::diagnostics::effective_sample_size;
use dgm_core::model::{GeneratorModel, Observation};
use dgm_core::models::{
    circle_model, linear_gaussian_model, lotka_volterra_model, toy1d_model, LotkaVolterraSpec,
};
use dgm_core::rng::chain_rng;
use dgm_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InitializationFailed = 4,
    NumericalFailure = 5,
    Unsupported = 6,
    Panic = 7,
}

/// Sampler settings; start from [`dgm_sampler_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DgmSamplerConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub n_geodesic: usize,
    pub eps_proj: f64,
    pub max_newton_iters: usize,
    pub max_fallback_iters: usize,
    pub check_reversibility: bool,
    pub reversibility_factor: f64,
    pub seed: u64,
}

impl From<SamplerConfig> for DgmSamplerConfig {
    fn from(c: SamplerConfig) -> Self {
        Self {
            dt: c.dt,
            n_steps: c.n_steps,
            n_geodesic: c.n_geodesic,
            eps_proj: c.eps_proj,
            max_newton_iters: c.max_newton_iters,
            max_fallback_iters: c.max_fallback_iters,
            check_reversibility: c.check_reversibility,
            reversibility_factor: c.reversibility_factor,
            seed: c.seed,
        }
    }
}

impl From<DgmSamplerConfig> for SamplerConfig {
    fn from(c: DgmSamplerConfig) -> Self {
        Self {
            dt: c.dt,
            n_steps: c.n_steps,
            n_geodesic: c.n_geodesic,
            eps_proj: c.eps_proj,
            max_newton_iters: c.max_newton_iters,
            max_fallback_iters: c.max_fallback_iters,
            check_reversibility: c.check_reversibility,
            reversibility_factor: c.reversibility_factor,
            seed: c.seed,
        }
    }
}

/// A generative model.
pub struct DgmModel {
    inner: GeneratorModel,
}

/// Samples returned by [`dgm_run_chmc`].
pub struct DgmChain {
    inner: SampleChain,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DgmStatus {
    match e {
        Error::DimensionMismatch { .. } => DgmStatus::DimensionMismatch,
        Error::InvalidConfig(_) => DgmStatus::InvalidArgument,
        Error::InitializationFailed { .. } => DgmStatus::InitializationFailed,
        Error::Unsupported(_) => DgmStatus::Unsupported,
        _ => DgmStatus::NumericalFailure,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (DgmStatus, String)>) -> DgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DgmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DgmStatus::Panic
        }
    }
}

fn lift(e: Error) -> (DgmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DgmStatus, String) {
    (DgmStatus::NullPointer, format!("{what} is null"))
}

/// Borrows `len` doubles at `ptr`; a null pointer is allowed only for `len == 0`.
unsafe fn doubles<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (DgmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), (DgmStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dgm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dgm_sampler_config_default() -> DgmSamplerConfig {
    SamplerConfig::default().into()
}

/// `y = wᵀu` with `u ~ N(0, I)`.
///
/// # Safety
/// `weights` must point to `n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_linear_gaussian(
    weights: *const f64,
    n: usize,
    out: *mut *mut DgmModel,
) -> DgmStatus {
    guard(|| {
        let w = doubles(weights, n, "weights")?;
        let inner = linear_gaussian_model(w).map_err(lift)?;
        store(out, DgmModel { inner })
    })
}

/// Squared norm of a standard normal pair.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_circle(out: *mut *mut DgmModel) -> DgmStatus {
    guard(|| store(out, DgmModel { inner: circle_model() }))
}

/// `y = z³ + 0.5·u₂`.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_toy1d(out: *mut *mut DgmModel) -> DgmStatus {
    guard(|| store(out, DgmModel { inner: toy1d_model() }))
}

/// Lotka–Volterra simulator over `steps` steps with default settings
/// otherwise.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_lotka_volterra(steps: usize, out: *mut *mut DgmModel) -> DgmStatus {
    guard(|| {
        let spec = LotkaVolterraSpec {
            n_steps: steps,
            ..Default::default()
        };
        let inner = lotka_volterra_model(spec).map_err(lift)?;
        store(out, DgmModel { inner })
    })
}

/// # Safety
/// `model` must come from a `dgm_model_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_free(model: *mut DgmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input, observed and latent dimensions. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_dims(
    model: *const DgmModel,
    inputs: *mut usize,
    observed: *mut usize,
    latents: *mut usize,
) -> DgmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        for (p, v) in [
            (inputs, m.input_dim()),
            (observed, m.observed_dim()),
            (latents, m.latent_dim()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Writes `g_y(u)` into `y`.
///
/// # Safety
/// `u` must hold `n_u` doubles and `y` room for `n_y`.
#[no_mangle]
pub unsafe extern "C" fn dgm_model_observe(
    model: *const DgmModel,
    u: *const f64,
    n_u: usize,
    y: *mut f64,
    n_y: usize,
) -> DgmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let u = doubles(u, n_u, "u")?;
        if n_u != m.input_dim() {
            return Err(lift(Error::DimensionMismatch {
                expected: m.input_dim(),
                found: n_u,
            }));
        }
        if n_y != m.observed_dim() {
            return Err(lift(Error::DimensionMismatch {
                expected: m.observed_dim(),
                found: n_y,
            }));
        }
        if y.is_null() {
            return Err(null("y"));
        }
        slice::from_raw_parts_mut(y, n_y).copy_from_slice(&m.observe(u));
        Ok(())
    })
}

/// Runs constrained HMC conditioned on `observation` and returns the chain.
/// The random stream is fixed by `config.seed`.
///
/// # Safety
/// `model` must be live, `observation` must hold `n_obs` doubles, `config`
/// must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dgm_run_chmc(
    model: *const DgmModel,
    observation: *const f64,
    n_obs: usize,
    config: *const DgmSamplerConfig,
    n_samples: usize,
    burn_in: usize,
    out: *mut *mut DgmChain,
) -> DgmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let cfg: SamplerConfig = (*config.as_ref().ok_or_else(|| null("config"))?).into();
        let values = doubles(observation, n_obs, "observation")?.to_vec();
        let obs = Observation::new(values, "ffi").map_err(lift)?;
        if obs.len() != m.observed_dim() {
            return Err(lift(Error::DimensionMismatch {
                expected: m.observed_dim(),
                found: obs.len(),
            }));
        }
        let mut rng = chain_rng(cfg.seed, 0);
        let inner = run_chain(m, &obs, &cfg, n_samples, burn_in, &mut rng).map_err(lift)?;
        store(out, DgmChain { inner })
    })
}

/// # Safety
/// `chain` must come from [`dgm_run_chmc`] or be null.
#[no_mangle]
pub unsafe extern "C" fn dgm_chain_free(chain: *mut DgmChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Stored sample count; zero for a null handle.
///
/// # Safety
/// `chain` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn dgm_chain_len(chain: *const DgmChain) -> usize {
    chain.as_ref().map_or(0, |c| c.inner.len())
}

/// Fraction of accepted proposals; zero for a null handle.
///
/// # Safety
/// `chain` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn dgm_chain_accept_rate(chain: *const DgmChain) -> f64 {
    chain.as_ref().map_or(0.0, |c| c.inner.accept_rate())
}

/// Copies the latents row-major (`len × latent_dim`) into `out`, which must
/// hold exactly that many doubles.
///
/// # Safety
/// `chain` must be live and `out` must have room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dgm_chain_latents(chain: *const DgmChain, out: *mut f64, n: usize) -> DgmStatus {
    guard(|| {
        let c = &chain.as_ref().ok_or_else(|| null("chain"))?.inner;
        let total = c.len() * c.latent_names.len();
        if n != total {
            return Err(lift(Error::DimensionMismatch {
                expected: total,
                found: n,
            }));
        }
        if total == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = slice::from_raw_parts_mut(out, n);
        for (row, z) in dst.chunks_exact_mut(c.latent_names.len()).zip(&c.latents) {
            row.copy_from_slice(z);
        }
        Ok(())
    })
}

/// Geyer effective sample size of `n ≥ 10` values.
///
/// # Safety
/// `series` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dgm_effective_sample_size(series: *const f64, n: usize, out: *mut f64) -> DgmStatus {
    guard(|| {
        let x = doubles(series, n, "series")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = effective_sample_size(x).map_err(lift)?;
        Ok(())
    })
}
