use std::ffi::CStr;
use std::ptr;

use dgm_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dgm_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn linear_gaussian_chain_through_the_c_interface() {
    unsafe {
        let w = [1.0, 1.0];
        let mut model = ptr::null_mut();
        assert_eq!(dgm_model_linear_gaussian(w.as_ptr(), 2, &mut model), DgmStatus::Ok);
        let (mut m, mut n, mut k) = (0, 0, 0);
        assert_eq!(dgm_model_dims(model, &mut m, &mut n, &mut k), DgmStatus::Ok);
        assert_eq!((m, n, k), (2, 1, 1));

        let mut cfg = dgm_sampler_config_default();
        cfg.seed = 5;
        let obs = [3.0];
        let mut chain = ptr::null_mut();
        let status = dgm_run_chmc(model, obs.as_ptr(), 1, &cfg, 4000, 100, &mut chain);
        assert_eq!(status, DgmStatus::Ok, "{}", last_error());
        assert_eq!(dgm_chain_len(chain), 4000);
        assert!(dgm_chain_accept_rate(chain) > 0.9);

        let mut z = vec![0.0; 4000];
        assert_eq!(dgm_chain_latents(chain, z.as_mut_ptr(), z.len()), DgmStatus::Ok);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let mut ess = 0.0;
        assert_eq!(dgm_effective_sample_size(z.as_ptr(), z.len(), &mut ess), DgmStatus::Ok);
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z.len() as f64;
        assert!((mean - 1.5).abs() <= 4.0 * (var / ess).sqrt(), "{mean}");

        dgm_chain_free(chain);
        dgm_model_free(model);
    }
}

#[test]
fn same_seed_gives_identical_chains() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dgm_model_toy1d(&mut model), DgmStatus::Ok);
        let cfg = dgm_sampler_config_default();
        let run = || {
            let mut chain = ptr::null_mut();
            assert_eq!(dgm_run_chmc(model, [1.0].as_ptr(), 1, &cfg, 200, 0, &mut chain), DgmStatus::Ok);
            let mut z = vec![0.0; 200];
            assert_eq!(dgm_chain_latents(chain, z.as_mut_ptr(), 200), DgmStatus::Ok);
            dgm_chain_free(chain);
            z
        };
        assert_eq!(run(), run());
        dgm_model_free(model);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dgm_model_lotka_volterra(0, &mut model), DgmStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(dgm_model_circle(&mut model), DgmStatus::Ok);
        assert!(last_error().is_empty());
        let cfg = dgm_sampler_config_default();
        let mut chain = ptr::null_mut();
        let two = [1.0, 2.0];
        assert_eq!(
            dgm_run_chmc(model, two.as_ptr(), 2, &cfg, 10, 0, &mut chain),
            DgmStatus::DimensionMismatch
        );
        let mut bad = cfg;
        bad.n_steps = 0;
        assert_eq!(
            dgm_run_chmc(model, two.as_ptr(), 1, &bad, 10, 0, &mut chain),
            DgmStatus::InvalidArgument
        );
        assert_eq!(
            dgm_run_chmc(model, two.as_ptr(), 1, ptr::null(), 10, 0, &mut chain),
            DgmStatus::NullPointer
        );
        let mut y = [0.0; 1];
        assert_eq!(dgm_model_observe(model, [3.0, 4.0].as_ptr(), 2, y.as_mut_ptr(), 1), DgmStatus::Ok);
        assert_eq!(y[0], 25.0);
        assert_eq!(
            dgm_model_observe(model, [3.0].as_ptr(), 1, y.as_mut_ptr(), 1),
            DgmStatus::DimensionMismatch
        );
        let mut ess = 0.0;
        assert_eq!(
            dgm_effective_sample_size([1.0; 20].as_ptr(), 20, &mut ess),
            DgmStatus::NumericalFailure
        );
        dgm_model_free(model);
        dgm_model_free(ptr::null_mut());
        dgm_chain_free(ptr::null_mut());
        assert_eq!(dgm_chain_len(ptr::null()), 0);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dgm.h")).unwrap();
    for name in [
        "typedef struct DgmModel DgmModel",
        "typedef struct DgmChain DgmChain",
        "DGM_STATUS_OK = 0",
        "dgm_last_error_message(void)",
        "dgm_run_chmc(",
        "dgm_chain_latents(",
        "dgm_effective_sample_size(",
        "dgm_model_free(",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let version = unsafe { CStr::from_ptr(dgm_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
