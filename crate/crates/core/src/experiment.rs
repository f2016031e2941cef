//! Experiment runner behind the `dgm` subcommands, plus the CSV formats it
//! writes and reads back.
//!
//! Files written by [`infer`]:
//!
//! | file              | columns                                                        |
//! |-------------------|----------------------------------------------------------------|
//! | `chain.csv`       | `sample, <latents…>, accepted, delta_h[, weight]`              |
//! | `stats.csv`       | `scalar, mean, stderr, ess, accept_rate, n_samples, truth, abs_error` |
//! | `rmse.csv`        | `n, rmse` (only when the truth is known)                       |
//! | `transitions.csv` | `sample, projection_iters, fallback_used, nonreversible, projection_failed, constraint_residual, tangency_residual` (chmc only) |
//! | `timing.csv`      | `scalar, ess, ess_per_sec, wall_seconds`                       |
//!
//! Everything except `timing.csv` is a pure function of the config and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::abc::{abc_input_space_mcmc, abc_mcmc, abc_reject, abc_slice_mcmc};
use crate::chain::SampleChain;
use crate::chmc::run_chain;
use crate::config::{simulate_truth, ExperimentConfig, Method, ResolvedObservation};
use crate::diagnostics::{chain_stats, posterior_rmse, ChainStats};
use crate::error::{Error, Result};
use crate::model::GeneratorModel;
use crate::rng::chain_rng;

/// Runs the configured method with run seed `seed` on RNG stream `stream`.
pub fn run_method(
    cfg: &ExperimentConfig,
    model: &GeneratorModel,
    resolved: &ResolvedObservation,
    seed: u64,
    stream: u64,
) -> Result<SampleChain> {
    let obs = &resolved.observation;
    let mut rng = chain_rng(seed, stream);
    let (n, burn) = (cfg.run.n_samples, cfg.run.burn_in);
    if cfg.method.name == Method::Chmc {
        let sampler = crate::chmc::SamplerConfig {
            seed,
            ..cfg.sampler_config()
        };
        return run_chain(model, obs, &sampler, n, burn, &mut rng);
    }
    let mut abc = cfg.abc_config()?;
    abc.seed = seed;
    match cfg.method.name {
        Method::AbcReject => abc_reject(model, obs, &abc, &mut rng),
        Method::AbcMcmc => abc_mcmc(model, obs, &abc, n, burn, &mut rng),
        Method::AbcInput => abc_input_space_mcmc(model, obs, &abc, n, burn, &mut rng),
        Method::AbcSlice => abc_slice_mcmc(model, obs, &abc, n, burn, &mut rng),
        Method::Chmc => unreachable!(),
    }
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub chain: SampleChain,
    pub stats: ChainStats,
    pub resolved: ResolvedObservation,
    pub output_dir: PathBuf,
}

/// Runs one config and writes its output files into `output_dir`.
pub fn infer(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    seed: Option<u64>,
    output_dir: &Path,
) -> Result<InferOutcome> {
    let model = cfg.build_model()?;
    let resolved = cfg.resolve_observation(&model, base_dir, None)?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let chain = run_method(cfg, &model, &resolved, seed, 0)?;
    write_run(&chain, &resolved, output_dir)
}

fn write_run(
    chain: &SampleChain,
    resolved: &ResolvedObservation,
    output_dir: &Path,
) -> Result<InferOutcome> {
    let truth = resolved.truth_latents.as_deref();
    let stats = chain_stats(chain, truth);
    fs::create_dir_all(output_dir)?;
    fs::write(output_dir.join("chain.csv"), chain_csv(chain))?;
    fs::write(output_dir.join("stats.csv"), stats_csv(&stats, truth))?;
    fs::write(output_dir.join("timing.csv"), timing_csv(&stats))?;
    if let Some(t) = truth {
        if chain.weights.is_none() && !chain.is_empty() {
            fs::write(output_dir.join("rmse.csv"), rmse_csv(&chain.latents, t)?)?;
        }
    }
    if !chain.records.is_empty() {
        fs::write(output_dir.join("transitions.csv"), transitions_csv(chain))?;
    }
    Ok(InferOutcome {
        chain: chain.clone(),
        stats,
        resolved: resolved.clone(),
        output_dir: output_dir.to_path_buf(),
    })
}

/// Writes `truth_u.csv`, `truth_z.csv`, `observation.csv` and, for
/// Lotka–Volterra, `trajectory.csv`.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, output_dir: &Path) -> Result<ResolvedObservation> {
    let model = cfg.build_model()?;
    let truth = simulate_truth(cfg, &model, seed)?;
    let u = truth.truth_inputs.as_deref().unwrap_or_default();
    let z = truth.truth_latents.as_deref().unwrap_or_default();
    fs::create_dir_all(output_dir)?;
    fs::write(output_dir.join("truth_u.csv"), column_csv(u))?;
    fs::write(output_dir.join("truth_z.csv"), named_csv(model.latent_names(), z))?;
    fs::write(output_dir.join("observation.csv"), truth.observation.to_csv())?;
    if cfg.model.name == "lotka_volterra" {
        let spec = cfg.lotka_volterra_spec()?;
        let mut s = String::from("step,y1,y2\n");
        let _ = writeln!(s, "0,{},{}", spec.y0[0], spec.y0[1]);
        for (t, y) in truth.observation.values().chunks(2).enumerate() {
            let _ = writeln!(s, "{},{},{}", t + 1, y[0], y[1]);
        }
        fs::write(output_dir.join("trajectory.csv"), s)?;
    }
    Ok(truth)
}

/// A config taking part in a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonEntry {
    pub label: String,
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

/// Per-(config, scalar) summary over repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub method: String,
    pub scalar: String,
    pub runs: usize,
    pub ess_mean: f64,
    pub ess_stderr: f64,
    pub ess_per_sec_mean: f64,
    pub ess_per_sec_stderr: f64,
    pub accept_rate_mean: f64,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Runs every entry `runs` times with seeds `seed, seed + 1, …` on `jobs`
/// worker threads. Each run writes into `<output_dir>/<label>/run-<r>/`.
/// Writes `comparison.csv` and `comparison_timing.csv`.
pub fn compare(
    entries: &[ComparisonEntry],
    runs: usize,
    seed: u64,
    jobs: usize,
    output_dir: &Path,
) -> Result<Vec<ComparisonRow>> {
    if entries.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least two configs".into()));
    }
    if runs == 0 {
        return Err(Error::InvalidConfig("--runs must be at least 1".into()));
    }
    let mut prepared = Vec::with_capacity(entries.len());
    for e in entries {
        let model = e.config.build_model()?;
        let resolved = e.config.resolve_observation(&model, &e.base_dir, None)?;
        prepared.push((model, resolved));
    }
    let (first_model, first_obs) = &prepared[0];
    for (e, (model, resolved)) in entries.iter().zip(&prepared).skip(1) {
        if model.name() != first_model.name()
            || resolved.observation.values() != first_obs.observation.values()
        {
            return Err(Error::InvalidConfig(format!(
                "{} and {} condition on different observations",
                entries[0].label, e.label
            )));
        }
    }
    let tasks: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|c| (0..runs).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<ChainStats> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let (model, resolved) = &prepared[c];
                let e = &entries[c];
                let chain = run_method(&e.config, model, resolved, seed + r as u64, r as u64)?;
                let dir = output_dir.join(&e.label).join(format!("run-{r}"));
                write_run(&chain, resolved, &dir).map(|o| o.stats)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for (c, e) in entries.iter().enumerate() {
        let stats = &outcomes[c * runs..(c + 1) * runs];
        for (k, scalar) in stats[0].names.iter().enumerate() {
            let ess: Vec<f64> = stats.iter().map(|s| s.ess[k]).collect();
            let eps: Vec<f64> = stats.iter().map(|s| s.ess_per_sec[k]).collect();
            let acc: Vec<f64> = stats.iter().map(|s| s.accept_rate).collect();
            let (ess_mean, ess_stderr) = mean_and_stderr(&ess);
            let (ess_per_sec_mean, ess_per_sec_stderr) = mean_and_stderr(&eps);
            rows.push(ComparisonRow {
                label: e.label.clone(),
                method: e.config.method.name.as_str().into(),
                scalar: scalar.clone(),
                runs,
                ess_mean,
                ess_stderr,
                ess_per_sec_mean,
                ess_per_sec_stderr,
                accept_rate_mean: mean_and_stderr(&acc).0,
            });
        }
    }
    fs::create_dir_all(output_dir)?;
    let mut det = String::from("label,method,scalar,runs,ess_mean,ess_stderr,accept_rate_mean\n");
    let mut timing = String::from("label,method,scalar,runs,ess_per_sec_mean,ess_per_sec_stderr\n");
    for r in &rows {
        let _ = writeln!(
            det,
            "{},{},{},{},{},{},{}",
            r.label, r.method, r.scalar, r.runs, r.ess_mean, r.ess_stderr, r.accept_rate_mean
        );
        let _ = writeln!(
            timing,
            "{},{},{},{},{},{}",
            r.label, r.method, r.scalar, r.runs, r.ess_per_sec_mean, r.ess_per_sec_stderr
        );
    }
    fs::write(output_dir.join("comparison.csv"), det)?;
    fs::write(output_dir.join("comparison_timing.csv"), timing)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV writers

pub fn column_csv(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

pub fn named_csv(names: &[String], values: &[f64]) -> String {
    let mut s = String::from("name,value\n");
    for (n, v) in names.iter().zip(values) {
        let _ = writeln!(s, "{n},{v}");
    }
    s
}

pub fn chain_csv(chain: &SampleChain) -> String {
    let mut s = String::from("sample");
    for n in &chain.latent_names {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",accepted,delta_h");
    if chain.weights.is_some() {
        s.push_str(",weight");
    }
    s.push('\n');
    for (i, z) in chain.latents.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in z {
            let _ = write!(s, ",{v}");
        }
        let acc = chain.accepted.get(i).copied().unwrap_or(true) as u8;
        let dh = chain.delta_h.get(i).copied().unwrap_or(f64::NAN);
        let _ = write!(s, ",{acc},{dh}");
        if let Some(w) = &chain.weights {
            let _ = write!(s, ",{}", w[i]);
        }
        s.push('\n');
    }
    s
}

pub fn stats_csv(stats: &ChainStats, truth: Option<&[f64]>) -> String {
    let mut s = String::from("scalar,mean,stderr,ess,accept_rate,n_samples,truth,abs_error\n");
    for (k, name) in stats.names.iter().enumerate() {
        let t = truth.map_or(f64::NAN, |t| t[k]);
        let err = stats.abs_error.as_ref().map_or(f64::NAN, |e| e[k]);
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{},{t},{err}",
            stats.mean[k], stats.stderr[k], stats.ess[k], stats.accept_rate, stats.n_samples
        );
    }
    s
}

pub fn timing_csv(stats: &ChainStats) -> String {
    let mut s = String::from("scalar,ess,ess_per_sec,wall_seconds\n");
    for (k, name) in stats.names.iter().enumerate() {
        let _ = writeln!(
            s,
            "{name},{},{},{}",
            stats.ess[k], stats.ess_per_sec[k], stats.wall_seconds
        );
    }
    s
}

/// Prefix sizes 10, 20, 40, … and the full length.
pub fn rmse_prefixes(n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::successors(Some(10usize), |&k| Some(k * 2))
        .take_while(|&k| k < n)
        .collect();
    sizes.push(n);
    sizes
}

pub fn rmse_csv(latents: &[Vec<f64>], truth: &[f64]) -> Result<String> {
    let mut s = String::from("n,rmse\n");
    for (n, r) in posterior_rmse(latents, truth, &rmse_prefixes(latents.len()))? {
        let _ = writeln!(s, "{n},{r}");
    }
    Ok(s)
}

pub fn transitions_csv(chain: &SampleChain) -> String {
    let mut s = String::from(
        "sample,projection_iters,fallback_used,nonreversible,projection_failed,constraint_residual,tangency_residual\n",
    );
    for (i, r) in chain.records.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{}",
            r.projection_iters,
            r.fallback_used as u8,
            r.nonreversible_rejected as u8,
            r.projection_failed as u8,
            r.constraint_residual,
            r.tangency_residual
        );
    }
    s
}

// ---------------------------------------------------------------------------
// CSV readers

/// A numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Reads a CSV whose fields past `skip_text` leading text columns are all
/// numbers.
pub fn read_table(path: &Path, skip_text: usize) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("{}: empty file", path.display())))?
        .split(',')
        .skip(skip_text)
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .skip(skip_text)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::InvalidConfig(format!("{}: line {}: {e}", path.display(), n + 2)))?;
        if row.len() != header.len() {
            return Err(Error::InvalidConfig(format!(
                "{}: line {}: expected {} fields",
                path.display(),
                n + 2,
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn chain_csv_round_trips() {
        let mut chain = SampleChain::new("x", vec!["a".into(), "b".into()]);
        chain.latents = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 7.0]];
        chain.accepted = vec![true, false];
        chain.delta_h = vec![0.25, f64::INFINITY];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, chain_csv(&chain)).unwrap();
        let t = read_table(&path, 0).unwrap();
        assert_eq!(t.header, ["sample", "a", "b", "accepted", "delta_h"]);
        assert_eq!(t.column("b").unwrap(), vec![1.0 / 3.0, 7.0]);
        assert_eq!(t.column("a").unwrap()[1], -2.5e-300);
        assert_eq!(t.column("delta_h").unwrap()[1], f64::INFINITY);
    }

    #[test]
    fn rmse_prefixes_end_at_length() {
        assert_eq!(rmse_prefixes(50), vec![10, 20, 40, 50]);
        assert_eq!(rmse_prefixes(5), vec![5]);
    }

    #[test]
    fn reject_with_infinite_epsilon_accepts_everything() {
        let c = cfg("[model]\nname = \"toy1d\"\n[method]\nname = \"abc-reject\"\n\
                     [abc]\nepsilon = inf\nbudget = 200\n");
        let dir = tempfile::tempdir().unwrap();
        let out = infer(&c, Path::new("."), None, dir.path()).unwrap();
        assert_eq!(out.stats.accept_rate, 1.0);
        assert_eq!(out.chain.len(), 200);
        let stats = read_table(&dir.path().join("stats.csv"), 1).unwrap();
        assert_eq!(stats.column("accept_rate").unwrap(), vec![1.0]);
    }

    #[test]
    fn compare_rejects_mismatched_observations() {
        let a = ComparisonEntry {
            label: "a".into(),
            config: cfg("[model]\nname = \"toy1d\"\n[observation]\nvalues = [1.0]\n[method]\nname = \"chmc\"\n"),
            base_dir: ".".into(),
        };
        let mut b = a.clone();
        b.label = "b".into();
        b.config.observation.values = Some(vec![2.0]);
        let dir = tempfile::tempdir().unwrap();
        assert!(compare(&[a.clone(), b], 1, 0, 1, dir.path()).is_err());
        assert!(compare(&[a], 1, 0, 1, dir.path()).is_err());
    }
}
