use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_finsler-morse"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exit code")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_flat_torus() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve"], &config("flat_torus.json"), dir.path()), 0);
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    let action = r["result"]["action"].as_f64().unwrap();
    assert!((action - 1.0).abs() < 1e-10, "{action}");
    assert!(dir.path().join("curve.csv").exists());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["seed"], 7);
}

#[test]
fn randers_torus_action_and_regularization() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve"], &config("randers_torus.json"), dir.path()), 0);
    let action = report(dir.path())["result"]["action"].as_f64().unwrap();
    // (|e1| + b . e1)^2 for the constant wind b = (0.3, 0)
    assert!((action - 1.3f64.powi(2)).abs() < 1e-10, "{action}");
    let reg = tempfile::tempdir().unwrap();
    assert_eq!(run(&["regularize"], &config("randers_torus.json"), reg.path()), 0);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(reg.path().join("manifest.json")).unwrap()).unwrap();
    assert!(m["derived"]["cutoffs"].is_object());
    assert!(m["derived"]["bounds"]["c1"].as_f64().unwrap() > 0.0);
}

#[test]
fn sphere_iterates() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["iterate"], &config("sphere_great_circle.json"), dir.path()), 0);
    let r = report(dir.path());
    let rows = r["result"]["scan"]["rows"].as_array().unwrap();
    for row in rows {
        let k = row["k"].as_u64().unwrap();
        assert_eq!(row["m_minus"].as_u64().unwrap(), 2 * k - 1);
        assert_eq!(row["m_zero_orbit"].as_u64().unwrap(), 2);
    }
    let scan = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(scan.starts_with("k,action,m_minus,m_zero_orbit,flags\n"));
    assert_eq!(scan.lines().count(), rows.len() + 1);
}

#[test]
fn non_positive_randers_fails_checks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["verify-metric"], &config("randers_not_positive.json"), dir.path()), 1);
    assert_eq!(report(dir.path())["pass"], false);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 9, "manifold": {"kind": "euclidean", "dim": 2}, "metric": {"kind": "euclidean"}}"#)
        .unwrap();
    assert_eq!(run(&["solve"], &bad, &dir.path().join("o1")), 2);
    // verify-metric config has no curve section
    assert_eq!(run(&["solve"], &config("randers_not_positive.json"), &dir.path().join("o2")), 2);
    // nothing to reduce on a nondegenerate orbit
    assert_eq!(run(&["reduce"], &config("bumpy_torus.json"), &dir.path().join("o3")), 2);
    assert_eq!(run(&["iterate"], &config("segment_plane.json"), &dir.path().join("o4")), 2);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(&["index"], &config("randers_torus.json"), d.path()), 0);
    }
    for f in ["report.json", "curve.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn seed_override_changes_initial_curve() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(&["gradcheck"], &config("flat_torus.json"), a.path()), 0);
    assert_eq!(run(&["gradcheck", "--seed", "99"], &config("flat_torus.json"), b.path()), 0);
    assert_ne!(report(a.path())["result"], report(b.path())["result"]);
}
