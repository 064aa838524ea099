use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sigmaforest");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("SIGMAFOREST_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate_sigma(dir: &Path) {
    ok(dir, &["generate", "--kind", "cos2-sigma", "--periods", "2", "--points-per-period", "60", "--seed", "4", "--out", "d.csv"]);
}

#[test]
fn fit_and_predict_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate_sigma(d);
    for model in ["a.json", "b.json"] {
        ok(d, &["fit", "--data", "d.csv", "--use-sigma", "--n-trees", "20", "--min-samples-leaf", "4", "--seed", "11", "--model", model]);
    }
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    ok(d, &["predict", "--model", "a.json", "--data", "d.csv", "--out", "p.csv"]);
    let text = std::fs::read_to_string(d.join("p.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,z_pred,z_std");
    let rows = std::fs::read_to_string(d.join("d.csv")).unwrap().lines().count() - 1;
    assert_eq!(lines.count(), rows);
}

#[test]
fn tuning_writes_a_score_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--kind", "linear", "--n", "200", "--out", "lin.csv"]);
    ok(d, &["tune", "--data", "lin.csv", "--target", "y", "--n-trees", "10", "--candidates", "1,5,25", "--metric", "mse", "--out", "t.csv"]);
    let text = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["generate", "--kind", "sawtooth"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    generate_sigma(dir.path());
    let out = run(dir.path(), &["fit", "--data", "d.csv", "--no-x", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate_sigma(d);
    ok(d, &["fit", "--data", "d.csv", "--n-trees", "5", "--model", "m.json"]);
    std::fs::write(d.join("other.csv"), "t,y\n1,2\n").unwrap();
    let out = run(d, &["predict", "--model", "m.json", "--data", "other.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
    let out = run(d, &["predict", "--model", "d.csv", "--data", "d.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_real_data_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["experiment", "dielectric"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(dir.path(), &["experiment", "diffraction", "--data", "absent.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .current_dir(dir.path())
        .env("SIGMAFOREST_OUT_DIR", "from-env")
        .args(["generate", "--kind", "white-noise"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let written: Vec<_> = std::fs::read_dir(dir.path().join("from-env")).unwrap().collect();
    assert_eq!(written.len(), 1);
}

#[test]
fn standin_experiment_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["--out-dir", "o", "experiment", "dielectric", "--standin", "--seeds", "1", "--n-trees", "30"]);
    assert!(stdout.contains("r2_gain"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/dielectric/report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["r2_with"].is_number());
    assert!(report["metrics"]["r2_without"].is_number());
}
