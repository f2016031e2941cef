use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgm_core::config::{ExperimentConfig, MethodSection, Method, ModelSection};
use dgm_core::experiment::{compare, infer, simulate, ComparisonEntry};
use dgm_core::Error;

#[derive(Parser)]
#[command(name = "dgm", version, about = "Exact conditioning of differentiable generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw ground-truth inputs and write the resulting observation.
    Simulate {
        /// Config whose [model] table describes the generator.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model name, when no config is given.
        #[arg(long, conflicts_with = "config")]
        model: Option<String>,
        /// Lotka–Volterra step count.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Run one inference config.
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Overrides [run] seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [run] output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run several configs repeatedly and tabulate ESS per second.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Run r uses seed + r.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "compare-out")]
        output_dir: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn label_for(path: &Path, taken: &[ComparisonEntry]) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "config".into());
    let mut label = stem.clone();
    let mut k = 2;
    while taken.iter().any(|e| e.label == label) {
        label = format!("{stem}-{k}");
        k += 1;
    }
    label
}

fn run(cli: Cli) -> dgm_core::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            model,
            steps,
            seed,
            output_dir,
        } => {
            let mut cfg = match (config, model) {
                (Some(path), _) => ExperimentConfig::read(&path)?,
                (None, Some(name)) => ExperimentConfig {
                    model: ModelSection {
                        name,
                        ..Default::default()
                    },
                    observation: Default::default(),
                    method: MethodSection { name: Method::Chmc },
                    chmc: Default::default(),
                    abc: Default::default(),
                    run: Default::default(),
                },
                (None, None) => {
                    return Err(Error::InvalidConfig("simulate needs --config or --model".into()))
                }
            };
            if steps.is_some() {
                cfg.model.steps = steps;
            }
            cfg.validate()?;
            let truth = simulate(&cfg, seed, &output_dir)?;
            let model = cfg.build_model()?;
            if let Some(z) = &truth.truth_latents {
                for (name, v) in model.latent_names().iter().zip(z) {
                    println!("{name} = {v}");
                }
            }
            if cfg.model.name == "lotka_volterra" {
                let spec = cfg.lotka_volterra_spec()?;
                let u = truth.truth_inputs.as_deref().unwrap_or_default();
                let rates = spec.parameters_from_inputs(u);
                println!("rates = {rates:?}");
            }
            println!("wrote {}", output_dir.display());
            Ok(())
        }
        Command::Infer {
            config,
            seed,
            output_dir,
        } => {
            let cfg = ExperimentConfig::read(&config)?;
            let base = base_dir(&config);
            let out = output_dir.unwrap_or_else(|| base.join(&cfg.run.output_dir));
            let outcome = infer(&cfg, &base, seed, &out)?;
            let s = &outcome.stats;
            println!(
                "{}: {} samples, accept rate {:.4}, {:.2} s",
                cfg.method.name.as_str(),
                s.n_samples,
                s.accept_rate,
                s.wall_seconds
            );
            for (k, name) in s.names.iter().enumerate() {
                println!(
                    "  {name}: mean {:.6} stderr {:.2e} ess {:.1} ess/s {:.2}",
                    s.mean[k], s.stderr[k], s.ess[k], s.ess_per_sec[k]
                );
            }
            if outcome.chain.is_empty() {
                eprintln!("warning: no samples were accepted");
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Compare {
            configs,
            runs,
            seed,
            output_dir,
            jobs,
        } => {
            if configs.len() < 2 {
                return Err(Error::InvalidConfig("compare needs at least two --config".into()));
            }
            let mut entries: Vec<ComparisonEntry> = Vec::new();
            for path in &configs {
                let config = ExperimentConfig::read(path)?;
                entries.push(ComparisonEntry {
                    label: label_for(path, &entries),
                    config,
                    base_dir: base_dir(path),
                });
            }
            let jobs = jobs.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            });
            let rows = compare(&entries, runs, seed, jobs, &output_dir)?;
            for r in &rows {
                println!(
                    "{:<16} {:<10} {:<8} ess/s {:>10.3} ± {:<8.3} ess {:>9.1} accept {:.4}",
                    r.label,
                    r.method,
                    r.scalar,
                    r.ess_per_sec_mean,
                    r.ess_per_sec_stderr,
                    r.ess_mean,
                    r.accept_rate_mean
                );
            }
            println!("wrote {}", output_dir.join("comparison.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::InvalidConfig(_) | Error::DimensionMismatch { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
