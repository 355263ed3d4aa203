use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eigenmoment(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigenmoment"))
        .args(args)
        .arg("--output")
        .arg(dir)
        .env_remove("EIGENMOMENT_THREADS")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lambda1_on_the_unit_ball_brackets_pi_squared() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["lambda1", "--space-form", "b=0", "--dim", "3", "--radius", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("lambda1.json"));
    let est = &json["estimate"];
    let (lo, hi) = (est["lower"].as_f64().unwrap(), est["upper"].as_f64().unwrap());
    let pi2 = std::f64::consts::PI.powi(2);
    assert!(lo <= pi2 && pi2 <= hi, "[{lo}, {hi}]");
    assert!(dir.path().join("eigenfunction.csv").exists());
    assert!(dir.path().join("eigenfunction.gp").exists());
}

#[test]
fn hyperbolic_preset_is_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["check-balance", "--preset", "hyperbolic"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("balance.json"));
    assert_eq!(json["balanced"], Value::Bool(true));
    assert_eq!(json["convexity"]["holds"], Value::Bool(true));
}

#[test]
fn positive_mean_curvature_bound_is_reported_unbalanced() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["check-balance", "--preset", "theorem-b", "--h", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let json = read_json(&dir.path().join("balance.json"));
    assert_eq!(json["balanced"], Value::Bool(false));
}

#[test]
fn sweep_rows_decrease_with_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(
        dir.path(),
        &["sweep", "--space-form", "b=-1", "--dim", "2", "--radius", "0.5:5:0.5", "--grid-n", "1025"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let hi = header.iter().position(|&c| c == "lambda_hi").unwrap();
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(hi).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 10);
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"command": "lambda1", "space_form": 0.0, "dim": 2, "radius": 1.0, "tol": 0.1}"#).unwrap();
    let config = config.to_str().unwrap();

    let out = eigenmoment(dir.path(), &["--config", config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let loose = read_json(&dir.path().join("lambda1.json"))["estimate"]["iterations"].as_u64().unwrap();

    let out = eigenmoment(dir.path(), &["--config", config, "--tol", "1e-8"]);
    assert_eq!(out.status.code(), Some(0));
    let json = read_json(&dir.path().join("lambda1.json"));
    let est = &json["estimate"];
    let width = est["upper"].as_f64().unwrap() - est["lower"].as_f64().unwrap();
    assert!(width <= 1e-8 * est["lower"].as_f64().unwrap());
    assert!(est["iterations"].as_u64().unwrap() > loose);
}

#[test]
fn malformed_config_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, "{\n  \"command\": \"lambda1\",\n  \"tolerance\": 1e-3\n}").unwrap();
    let out = eigenmoment(dir.path(), &["--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json:3:"), "{stderr}");
}

#[test]
fn missing_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["--dim", "3"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn antipodal_radius_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["lambda1", "--space-form", "b=1", "--radius", "3.141592653589793"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(!dir.path().join("lambda1.json").exists());
}

#[test]
fn output_is_deterministic_across_runs_and_thread_counts() {
    let args = ["sweep", "--space-form", "b=-1", "--dim", "3", "--radius", "1:3:1", "--grid-n", "513"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(eigenmoment(a.path(), &args).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_eigenmoment"))
        .args(args)
        .arg("--output")
        .arg(b.path())
        .env("EIGENMOMENT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(a.path().join("sweep.csv")).unwrap(), fs::read(b.path().join("sweep.csv")).unwrap());

    let args = ["moments", "--space-form", "b=0", "--dim", "2", "--k-max", "12", "--grid-n", "513"];
    assert_eq!(eigenmoment(a.path(), &args).status.code(), Some(0));
    assert_eq!(eigenmoment(b.path(), &args).status.code(), Some(0));
    assert_eq!(fs::read(a.path().join("moments.csv")).unwrap(), fs::read(b.path().join("moments.csv")).unwrap());
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eigenmoment"))
        .args(["lambda1", "--output"])
        .arg(dir.path())
        .env("EIGENMOMENT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn reconcile_reports_both_normalizations() {
    let dir = tempfile::tempdir().unwrap();
    let out = eigenmoment(dir.path(), &["reconcile", "--space-form", "b=0", "--dim", "2", "--grid-n", "2049"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("reconcile.json"));
    let growth = json["growth"].as_array().unwrap();
    assert_eq!(growth.len(), 2);
    assert_eq!(growth[0]["normalization"], "probabilist");
    assert_eq!(json["flagged"], Value::Bool(false));
}
