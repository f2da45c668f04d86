//! Black-box tests of the binary: artifact shapes, exit codes, determinism,
//! and the seed-resolution rules.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orthoreg"));
    // tests control the seed env explicitly; never inherit one
    cmd.env_remove("ORTHOREG_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn toy2d_records_every_step_plus_the_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["toy2d", "--n", "30", "--steps", "300", "--mode", "local"])
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(dir.path(), "toy2d.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,mean_nn_angle_deg,min_angle_deg,loss");
    assert_eq!(lines.len(), 302); // header + steps 0..=300
    assert!(lines[1].starts_with("0,"));
    assert!(lines[301].starts_with("300,"));
}

#[test]
fn toy2d_zero_steps_reports_only_the_initial_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["toy2d", "--steps", "0"])
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success());
    assert_eq!(read(dir.path(), "toy2d.csv").lines().count(), 2);
}

#[test]
fn toy2d_rejects_unknown_mode_with_usage_error() {
    let out = run(bin().args(["toy2d", "--mode", "sideways"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toy2d_rejects_zero_step_size_with_usage_error() {
    let out = run(bin().args(["toy2d", "--step-size", "0"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toy2d_reruns_are_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = run(bin()
            .args(["toy2d", "--steps", "50", "--seed", "11"])
            .arg("--output-dir")
            .arg(d.path()));
        assert!(out.status.success());
    }
    assert_eq!(read(d1.path(), "toy2d.csv"), read(d2.path(), "toy2d.csv"));
}

#[test]
fn seed_env_var_is_the_fallback_and_flags_override_it() {
    let from_env = {
        let dir = tempfile::tempdir().unwrap();
        let out = run(bin()
            .args(["toy2d", "--steps", "20"])
            .env("ORTHOREG_SEED", "5")
            .arg("--output-dir")
            .arg(dir.path()));
        assert!(out.status.success());
        read(dir.path(), "toy2d.csv")
    };
    let from_flag = {
        let dir = tempfile::tempdir().unwrap();
        let out = run(bin()
            .args(["toy2d", "--steps", "20", "--seed", "5"])
            .arg("--output-dir")
            .arg(dir.path()));
        assert!(out.status.success());
        read(dir.path(), "toy2d.csv")
    };
    let flag_wins = {
        let dir = tempfile::tempdir().unwrap();
        let out = run(bin()
            .args(["toy2d", "--steps", "20", "--seed", "5"])
            .env("ORTHOREG_SEED", "99")
            .arg("--output-dir")
            .arg(dir.path()));
        assert!(out.status.success());
        read(dir.path(), "toy2d.csv")
    };
    assert_eq!(from_env, from_flag);
    assert_eq!(from_flag, flag_wins);
}

#[test]
fn malformed_seed_env_is_a_usage_error() {
    let out = run(bin().args(["toy2d"]).env("ORTHOREG_SEED", "not-a-number"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ORTHOREG_SEED"));
}

#[test]
fn mnist_rejects_zero_batch_before_touching_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["mnist", "--batch", "0", "--data-dir"])
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mnist_names_the_missing_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["mnist", "--data-dir"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("train-images-idx3-ubyte"),
        "stderr was: {}",
        stderr(&out)
    );
}

#[test]
fn bound_compare_warns_but_runs_when_orthogonality_is_reachable() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["bound-compare", "--n", "3", "--d", "4", "--steps", "10", "--seeds", "2"])
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning"));
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "bound_compare.json")).unwrap();
    assert_eq!(report["degenerate_regime"], serde_json::Value::Bool(true));
    assert_eq!(report["arms"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_reports_orthonormal_stats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.txt");
    std::fs::write(&path, "2 2\n1 0\n0 1\n").unwrap();
    let out = run(bin().args(["analyze", "--weights"]).arg(&path));
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 2);
    assert_eq!(report["d"], 2);
    assert_eq!(report["min_pairwise_angle_deg"], 90.0);
    assert_eq!(report["mean_nn_angle_deg"], 90.0);
    let hist: Vec<u64> = report["histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(hist.len(), 36);
    assert_eq!(hist.iter().sum::<u64>(), 1);
}

#[test]
fn analyze_reports_zero_angles_for_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.txt");
    std::fs::write(&path, "2 3\n1 2 2\n1 2 2\n").unwrap();
    let out = run(bin().args(["analyze", "--weights"]).arg(&path));
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["min_pairwise_angle_deg"], 0.0);
    assert_eq!(report["mean_nn_angle_deg"], 0.0);
}

#[test]
fn analyze_cites_the_line_of_a_malformed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.txt");
    std::fs::write(&path, "two columns\n1 2\n").unwrap();
    let out = run(bin().args(["analyze", "--weights"]).arg(&path));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(":1:"), "stderr was: {}", stderr(&out));
}

#[test]
fn gradcheck_passes_at_default_tolerance() {
    let out = run(bin().args(["gradcheck"]));
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("within tolerance"));
}

#[test]
fn gradcheck_fails_at_zero_tolerance() {
    let out = run(bin().args(["gradcheck", "--tol", "0"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("exceeded"));
}

#[test]
fn gradcheck_report_is_reproducible() {
    let a = run(bin().args(["gradcheck", "--seed", "7"]));
    let b = run(bin().args(["gradcheck", "--seed", "7"]));
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}
