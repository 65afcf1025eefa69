use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parisi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parisi")).args(args).env("PARISI_THREADS", "1").output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn solve_high_temperature_sk() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let out = parisi(&["solve", "--config", r#"{"mixture":{"2":0.36}}"#, "--csv", csv.to_str().unwrap()]);
    let v = json_of(&out);
    assert!((v["value"].as_f64().unwrap() - 0.18).abs() < 1e-6, "{v}");
    assert_eq!(v["certificate"]["verdict"], "ConsistentMinimizer");
    let mu = parisi::RsbMeasure::from_atoms(
        &v["measure"]["atoms"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| (a["q"].as_f64().unwrap(), a["mass"].as_f64().unwrap()))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(parisi::metric_d(&mu, &parisi::RsbMeasure::dirac(0.0).unwrap()) <= 1e-3);
    assert_eq!(first_line(&csv), "q,x_q");
}

#[test]
fn spherical_solve_reports_top_of_support() {
    let v = json_of(&parisi(&["spherical-solve", "--config", r#"{"p":4,"t":0.05,"beta_sq":1.0}"#]));
    assert!((v["q_M"].as_f64().unwrap() - 0.2836).abs() < 5e-4, "{v}");
    assert!(v["mass_on_S"].as_f64().unwrap() >= 0.999);
}

#[test]
fn check_pure_three_at_large_beta() {
    let v = json_of(&parisi(&["check", "--config", r#"{"mixture":{"3":21904}}"#]));
    assert_eq!(v["thm3_satisfied"], true);
    assert!(v["thm3_margin"].as_f64().unwrap() > 0.0);
    assert_eq!(v["gaussian_selftest"]["passed"], true);
}

#[test]
fn gamma_csv_header_and_file_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"command":"gamma","mixture":{"2":0.64},"u_samples":[0.0,0.5,1.0]}"#).unwrap();
    let csv = dir.path().join("g.csv");
    let out_path = dir.path().join("g.json");
    let out = parisi(&["--config", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first_line(&csv), "u,gamma,gamma_prime,gamma_pp_right,gamma_pp_left");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(v["gamma"]["gamma"].as_array().unwrap().len(), 3);
}

#[test]
fn export_is_byte_identical_across_runs() {
    let cfg = r#"{"mixture":{"2":0.64},"measure":{"atoms":[{"q":0.0,"mass":0.3},{"q":0.2,"mass":0.7}]}}"#;
    let a = parisi(&["export", "--config", cfg]);
    let b = parisi(&["export", "--config", cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn solve_is_byte_identical_across_runs() {
    let cfg = r#"{"mixture":{"2":0.36},"seed":5,"optimizer":{"max_k":1}}"#;
    let a = parisi(&["solve", "--config", cfg]);
    let b = parisi(&["solve", "--config", cfg]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn exit_codes() {
    assert_eq!(parisi(&["solve", "--config", r#"{"mixture":{"2":-1}}"#]).status.code(), Some(2));
    assert_eq!(parisi(&["solve", "--config", "{\"mixture\": }"]).status.code(), Some(2));
    assert_eq!(parisi(&["solve", "--config", r#"{"mixture":{"2":1},"bogus":1}"#]).status.code(), Some(2));
    let tiny = r#"{"mixture":{"2":0.64},"optimizer":{"max_evals":5,"max_k":0}}"#;
    let out = parisi(&["solve", "--config", tiny]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(serde_json::from_slice::<Value>(&out.stdout).is_ok());
    let out = parisi(&["spherical-solve", "--config", r#"{"p":3,"t":0.05,"beta_sq":1.0}"#]);
    assert_eq!(out.status.code(), Some(3));
}
