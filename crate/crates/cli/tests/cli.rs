use std::path::Path;
use std::process::{Command, Output};

fn lsdd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsdd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn shift_pair(dir: &Path, mu: &str) {
    let out = lsdd(
        dir,
        &["--seed", "3", "synth", "gaussian-shift", "--n", "80", "--n-prime", "80", "--mu", mu, "--x-out", "x.csv", "--x-prime-out", "y.csv"],
    );
    assert!(out.status.success());
}

#[test]
fn l2_on_shifted_data_is_positive_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    shift_pair(dir.path(), "0.8");
    let a = json(&lsdd(dir.path(), &["l2", "--x", "x.csv", "--x-prime", "y.csv", "--kde"]));
    let b = json(&lsdd(dir.path(), &["l2", "--x", "x.csv", "--x-prime", "y.csv", "--kde"]));
    assert_eq!(a, b);
    let combined = a["estimates"]["combined"].as_f64().unwrap();
    assert!(combined > 0.5, "{combined}");
    assert!(a["kde_l2"].as_f64().unwrap() > 0.0);
}

#[test]
fn fixed_grid_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    shift_pair(dir.path(), "0.3");
    let v = json(&lsdd(
        dir.path(),
        &["--sigma-grid", "0.4", "--lambda-grid", "0.1", "fit", "--x", "x.csv", "--x-prime", "y.csv"],
    ));
    assert_eq!(v["sigma"], 0.4);
    assert_eq!(v["lambda"], 0.1);
    assert_eq!(v["theta"].as_array().unwrap().len(), 160);
}

#[test]
fn csv_output_goes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    shift_pair(dir.path(), "0.5");
    let out = lsdd(
        dir.path(),
        &["--format", "csv", "-o", "res.csv", "test", "--x", "x.csv", "--x-prime", "y.csv", "--permutations", "19"],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("res.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value"));
    assert!(text.contains("p_value,"));
}

#[test]
fn class_balance_reads_labels_from_last_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsdd(
        dir.path(),
        &["synth", "class-balance", "--d", "2", "--pi", "0.8", "--n-test", "200", "--train-out", "tr.csv", "--test-out", "te.csv"],
    );
    assert!(out.status.success());
    let v = json(&lsdd(dir.path(), &["class-balance", "--train", "tr.csv", "--test", "te.csv"]));
    let pi = v["pi_hat"].as_f64().unwrap();
    assert!((pi - 0.8).abs() < 0.25, "{pi}");

    std::fs::write(dir.path().join("bad.csv"), "0.1,0.2,0.5\n0.3,0.1,1\n").unwrap();
    let bad = lsdd(dir.path(), &["class-balance", "--train", "bad.csv", "--test", "te.csv"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn change_detect_marks_peak_near_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsdd(dir.path(), &["--seed", "1", "synth", "step-series", "--length", "300", "--changes", "150", "-o", "s.csv"]);
    assert!(out.status.success());
    let v = json(&lsdd(dir.path(), &["change-detect", "--series", "s.csv", "--r", "50", "--stride", "5", "--peaks", "1"]));
    let peak = v["peaks"][0].as_u64().unwrap();
    assert!(peak.abs_diff(150) <= 50, "{peak}");
    assert_eq!(v["times"].as_array().unwrap().len(), v["scores"].as_array().unwrap().len());
}

#[test]
fn experiment_writes_identical_outputs_for_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    for base in ["a", "b"] {
        let out = lsdd(dir.path(), &["--seed", "7", "experiment", "l2-curve", "--replicates", "1", "-o", base]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    for key in ["version", "config", "rows", "summaries"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["config"]["seed"], 7);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lsdd(dir.path(), &["experiment", "no-such"]).status.code(), Some(1));
    assert_eq!(lsdd(dir.path(), &["--frobnicate"]).status.code(), Some(1));
    assert_eq!(lsdd(dir.path(), &["--folds", "1", "l2", "--x", "a", "--x-prime", "b"]).status.code(), Some(2));
    std::fs::write(dir.path().join("x.csv"), "1.0\nabc\n").unwrap();
    assert_eq!(lsdd(dir.path(), &["l2", "--x", "x.csv", "--x-prime", "x.csv"]).status.code(), Some(2));
    shift_pair(dir.path(), "0.2");
    assert_eq!(
        lsdd(dir.path(), &["--sigma-grid", "2,1", "l2", "--x", "x.csv", "--x-prime", "y.csv"]).status.code(),
        Some(1)
    );
    assert_eq!(lsdd(dir.path(), &["--help"]).status.code(), Some(0));
}
