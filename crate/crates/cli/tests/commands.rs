//! Runs the binary end to end.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torus-bvm")).args(args).output().expect("binary runs")
}

fn simulate_to(path: &Path) -> Output {
    run(&["simulate", "--truth", "B1", "--T", "1", "--dt", "1e-3", "--seed", "7", "--out", path.to_str().unwrap()])
}

#[test]
fn simulate_writes_requested_steps_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(simulate_to(&a).status.success());
    assert!(simulate_to(&b).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# torus-bvm trajectory v1"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[2], "2,0.001,1000,7");
    assert_eq!(lines.len() - 4, 1001, "initial point plus 1000 steps");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn zero_step_is_a_usage_error() {
    let out = run(&["simulate", "--truth", "B1", "--T", "1", "--dt", "0", "--seed", "7", "--out", "unused.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new("unused.csv").exists());
    assert_eq!(run(&["simulate", "--truth", "B9"]).status.code(), Some(2));
}

#[test]
fn efficiency_at_uniform_measure_is_analytic() {
    let out = run(&[
        "efficiency",
        "--truth",
        "flat",
        "--functional",
        r#"{"kind":"linear_B","weight":{"type":"cos","k":[1,0]}}"#,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = json["V"].as_f64().unwrap();
    let want = 1.0 / (4.0 * PI * PI);
    assert!((v - want).abs() < 1e-8 * want, "{v}");
}

#[test]
fn missing_and_corrupt_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = run(&["posterior", "--trajectory", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not a trajectory\n").unwrap();
    let out = run(&["posterior", "--trajectory", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));
}

#[test]
fn posterior_and_functional_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    assert!(simulate_to(&traj).status.success());
    let before = std::fs::read(&traj).unwrap();
    let post_dir = dir.path().join("post");
    let out = run(&["posterior", "--trajectory", traj.to_str().unwrap(), "--out", post_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["posterior_mean_grid.csv", "posterior_variances.csv", "posterior_mean_field.csv"] {
        assert!(post_dir.join(name).exists(), "{name}");
    }
    let samples = dir.path().join("samples.csv");
    let args = [
        "functionals",
        "--trajectory",
        traj.to_str().unwrap(),
        "--functional",
        r#"{"kind":"power_B","q":2}"#,
        "--samples",
        "50",
        "--seed",
        "3",
        "--out",
        samples.to_str().unwrap(),
    ];
    assert!(run(&args).status.success());
    let text = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert!(text.lines().skip(2).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() >= 0.0));
    assert_eq!(std::fs::read(&traj).unwrap(), before, "inputs are not modified");
}

#[test]
fn toy_experiment_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("toy.toml");
    std::fs::write(
        &config,
        "preset = \"desk\"\ntruths = [\"B1\"]\nhorizons = [5.0, 10.0]\nreplications = 2\nsamples = 100\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let start = Instant::now();
    let out = run(&["experiment", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(start.elapsed().as_secs() < 60);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|p| p == "table1.csv"));
    assert!(out_dir.join("rows.csv").exists());
}

#[test]
fn validate_passes_on_clean_checkout() {
    let out = run(&["validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}
