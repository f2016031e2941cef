//! Chain quality metrics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::chain::SampleChain;
use crate::error::{Error, Result};

/// Shortest series accepted by [`effective_sample_size`].
pub const MIN_SERIES_LEN: usize = 10;

/// Normalized autocorrelations `ρ̂_0..ρ̂_{n−1}` by zero-padded FFT.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("series"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * n as f64) || (c0 / n as f64).sqrt() <= 1e-14 * mean.abs() {
        return Err(Error::DegenerateSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Effective sample size with Geyer's initial positive sequence: the
/// autocorrelation sum stops at the first pair `ρ̂_{2m} + ρ̂_{2m+1}` that is
/// not positive. The result is clipped to `(0, S]`.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::DimensionMismatch {
            expected: MIN_SERIES_LEN,
            found: n,
        });
    }
    let rho = autocorrelation(series)?;
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let ess = if tau > 0.0 { n as f64 / tau } else { n as f64 };
    Ok(ess.min(n as f64))
}

/// Kish effective sample size `(Σw)² / Σw²` of importance weights.
pub fn weighted_ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub names: Vec<String>,
    pub ess: Vec<f64>,
    pub ess_per_sec: Vec<f64>,
    pub accept_rate: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Absolute error of the posterior mean against the truth, per scalar.
    pub abs_error: Option<Vec<f64>>,
    pub wall_seconds: f64,
    pub n_samples: usize,
}

/// Summary statistics of the latent series of `chain`. Degenerate series get
/// an ESS of zero.
pub fn chain_stats(chain: &SampleChain, truth: Option<&[f64]>) -> ChainStats {
    let k = chain.latent_names.len();
    let n = chain.len();
    let mut ess = Vec::with_capacity(k);
    let mut mean = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for i in 0..k {
        let s = chain.latent_series(i);
        let (m, var, e) = match &chain.weights {
            Some(w) => {
                let m: f64 = s.iter().zip(w).map(|(x, w)| x * w).sum();
                let v: f64 = s.iter().zip(w).map(|(x, w)| w * (x - m) * (x - m)).sum();
                (m, v, weighted_ess(w))
            }
            None if n == 0 => (f64::NAN, f64::NAN, 0.0),
            None => {
                let m = s.iter().sum::<f64>() / n as f64;
                let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                let e = if n >= MIN_SERIES_LEN {
                    effective_sample_size(&s).unwrap_or(0.0)
                } else {
                    0.0
                };
                (m, v, e)
            }
        };
        mean.push(m);
        stderr.push(if e > 0.0 { (var / e).sqrt() } else { f64::NAN });
        ess.push(e);
    }
    let ess_per_sec = ess
        .iter()
        .map(|e| if chain.wall_seconds > 0.0 { e / chain.wall_seconds } else { 0.0 })
        .collect();
    let abs_error = truth.map(|t| mean.iter().zip(t).map(|(m, t)| (m - t).abs()).collect());
    ChainStats {
        names: chain.latent_names.clone(),
        ess,
        ess_per_sec,
        accept_rate: chain.accept_rate(),
        mean,
        stderr,
        abs_error,
        wall_seconds: chain.wall_seconds,
        n_samples: n,
    }
}

/// RMSE between the running posterior mean and `truth` at each prefix size.
pub fn posterior_rmse(
    samples: &[Vec<f64>],
    truth: &[f64],
    prefix_sizes: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if let Some(first) = samples.first() {
        if first.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: first.len(),
            });
        }
    }
    let d = truth.len();
    let mut sums = vec![0.0; d];
    let mut done = 0;
    let mut sizes = prefix_sizes.to_vec();
    sizes.sort_unstable();
    let mut out = Vec::with_capacity(sizes.len());
    for n in sizes {
        let n = n.min(samples.len());
        for s in &samples[done..n] {
            for (a, x) in sums.iter_mut().zip(s) {
                *a += x;
            }
        }
        done = n;
        if n == 0 {
            continue;
        }
        let mse = sums
            .iter()
            .zip(truth)
            .map(|(s, t)| (s / n as f64 - t).powi(2))
            .sum::<f64>()
            / d as f64;
        out.push((n, mse.sqrt()));
    }
    Ok(out)
}

/// Equal-width histogram on `[lo, hi)`; values outside are dropped.
pub fn histogram(series: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<(f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in series {
        if x >= lo && x < hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + (i as f64 + 0.5) * width, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal_vec};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let e = standard_normal_vec(&mut seeded(seed), n);
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = phi * x[t - 1] + e[t];
        }
        x
    }

    #[test]
    fn iid_series_has_ess_near_length() {
        let x = standard_normal_vec(&mut seeded(1), 10_000);
        let ess = effective_sample_size(&x).unwrap();
        assert!((8_000.0..=12_000.0).contains(&ess), "{ess}");
    }

    #[test]
    fn alternating_series_is_clipped() {
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(effective_sample_size(&x).unwrap(), 100.0);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert_eq!(effective_sample_size(&[2.5; 50]), Err(Error::DegenerateSeries));
        assert!(effective_sample_size(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn ar1_matches_integrated_autocorrelation() {
        // τ = (1 + φ)/(1 − φ) = 3 for φ = 0.5
        let x = ar1(0.5, 200_000, 2);
        let ess = effective_sample_size(&x).unwrap();
        assert!((ess / 200_000.0 - 1.0 / 3.0).abs() < 0.02, "{ess}");
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let x = ar1(0.7, 300, 3);
        let rho = autocorrelation(&x).unwrap();
        let m = x.iter().sum::<f64>() / 300.0;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        for k in [1, 5, 17] {
            let ck: f64 = (0..300 - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum();
            assert!((rho[k] - ck / c0).abs() < 1e-12);
        }
    }

    #[test]
    fn ess_is_affine_invariant() {
        let x = ar1(0.8, 5000, 4);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
        let (a, b) = (effective_sample_size(&x).unwrap(), effective_sample_size(&y).unwrap());
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn thinning_does_not_create_information() {
        let x = ar1(0.9, 50_000, 5);
        let full = effective_sample_size(&x).unwrap();
        for k in [2, 5] {
            let thin: Vec<f64> = x.iter().step_by(k).copied().collect();
            let e = effective_sample_size(&thin).unwrap();
            assert!(e >= full / k as f64 * 0.8, "k={k}: {e} vs {full}");
        }
    }

    #[test]
    fn rmse_examples() {
        let truth = [1.0, -2.0];
        let same = vec![truth.to_vec(); 5];
        assert!(posterior_rmse(&same, &truth, &[1, 3, 5])
            .unwrap()
            .iter()
            .all(|&(_, r)| r == 0.0));
        let two = vec![vec![0.0], vec![2.0]];
        assert_eq!(posterior_rmse(&two, &[1.0], &[2]).unwrap(), vec![(2, 0.0)]);
        assert!(posterior_rmse(&two, &truth, &[2]).is_err());
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.1, 0.2, 0.6, 1.5, -1.0], 2, 0.0, 1.0);
        assert_eq!(h, vec![(0.25, 2), (0.75, 1)]);
    }

    #[test]
    fn stats_of_weighted_and_plain_chains() {
        let mut chain = SampleChain::new("t", vec!["a".into()]);
        chain.latents = (0..100).map(|i| vec![(i % 10) as f64]).collect();
        chain.proposals = 100;
        chain.accepted_count = 50;
        chain.wall_seconds = 2.0;
        let s = chain_stats(&chain, Some(&[4.0]));
        assert_eq!(s.accept_rate, 0.5);
        assert!((s.mean[0] - 4.5).abs() < 1e-12);
        assert!((s.abs_error.unwrap()[0] - 0.5).abs() < 1e-12);
        assert!((s.ess_per_sec[0] - s.ess[0] / 2.0).abs() < 1e-12);
        chain.weights = Some(vec![0.01; 100]);
        let w = chain_stats(&chain, None);
        assert!((w.ess[0] - 100.0).abs() < 1e-9);
    }
}
