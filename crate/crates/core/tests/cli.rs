use std::path::Path;
use std::process::{Command, Output};

use dgm_core::experiment::read_table;

fn dgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn zero_steps_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = dgm(&[
        "simulate",
        "--model",
        "lotka_volterra",
        "--steps",
        "0",
        "--output-dir",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn compare_needs_two_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        "[model]\nname = \"toy1d\"\n[observation]\nvalues = [1.0]\n[method]\nname = \"chmc\"\n",
    );
    let o = dgm(&["compare", "--config", &cfg, "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_keys_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[model]\nname = \"toy1d\"\nstepz = 3\n[method]\nname = \"chmc\"\n",
    );
    let o = dgm(&["infer", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn infinite_epsilon_accepts_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "inf.toml",
        "[model]\nname = \"lotka_volterra\"\nsteps = 5\n[observation]\nsource = \"simulate:1\"\n\
         [method]\nname = \"abc-reject\"\n[abc]\nepsilon = inf\nbudget = 300\n",
    );
    let out = dir.path().join("out");
    let o = dgm(&["infer", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats = read_table(&out.join("stats.csv"), 1).unwrap();
    assert!(stats.column("accept_rate").unwrap().iter().all(|&r| r == 1.0));
}

#[test]
fn linear_gaussian_mean_within_three_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "lg.toml",
        "[model]\nname = \"linear_gaussian\"\nweights = [1.0, 1.0]\n[observation]\nvalues = [3.0]\n\
         [method]\nname = \"chmc\"\n[run]\nn_samples = 5000\nseed = 7\n",
    );
    let out = dir.path().join("out");
    let o = dgm(&["infer", "--config", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let stats = read_table(&out.join("stats.csv"), 1).unwrap();
    let (mean, se) = (stats.column("mean").unwrap()[0], stats.column("stderr").unwrap()[0]);
    assert!((mean - 1.5).abs() <= 3.0 * se, "{mean} ± {se}");
    let chain = read_table(&out.join("chain.csv"), 0).unwrap();
    assert_eq!(chain.column("u1").unwrap().len(), 5000);
}

#[test]
fn simulate_writes_truth_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = dgm(&[
        "simulate",
        "--model",
        "lotka_volterra",
        "--steps",
        "4",
        "--seed",
        "2",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for f in ["truth_u.csv", "truth_z.csv", "observation.csv", "trajectory.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traj = read_table(&out.join("trajectory.csv"), 0).unwrap();
    assert_eq!(traj.column("y1").unwrap()[0], 100.0);
    assert_eq!(traj.column("step").unwrap().len(), 5);
}

#[test]
fn infer_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.toml",
        "[model]\nname = \"toy1d\"\n[observation]\nvalues = [1.0]\n[method]\nname = \"abc-input\"\n\
         [abc]\nkernel = \"gaussian\"\nepsilon = 0.3\n[run]\nn_samples = 400\n",
    );
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        assert!(dgm(&["infer", "--config", &cfg, "--seed", "11", "--output-dir", out.to_str().unwrap()])
            .status
            .success());
        (
            std::fs::read(out.join("chain.csv")).unwrap(),
            std::fs::read(out.join("stats.csv")).unwrap(),
        )
    };
    assert_eq!(read("a"), read("b"));
}
