//! End-to-end checks of the `pgsrm` binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pgsrm"))
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("pgsrm-cli-test-{name}"))
}

#[test]
fn train_happy_path_writes_run_directory() {
    let out = tmp("train");
    let _ = std::fs::remove_dir_all(&out);
    let status = bin()
        .args([
            "train",
            "--task",
            "color_mix",
            "--reward",
            "pgsrm",
            "--alpha",
            "4",
            "--episodes",
            "100",
            "--batch-size",
            "50",
            "--seed",
            "1",
            "--layers",
            "1",
            "--d-model",
            "16",
            "--heads",
            "2",
            "--out",
        ])
        .arg(&out)
        .status()
        .expect("binary runs");
    assert!(status.success());
    for file in [
        "config.resolved",
        "metrics.csv",
        "summary.txt",
        "checkpoint.final",
        "curves/reward.svg",
        "curves/entropy.svg",
        "curves/kl.svg",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    // episodes=100, batch=50: exactly 2 update rows after the header.
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn train_missing_task_is_a_usage_error() {
    let output = bin()
        .args(["train", "--reward", "pgsrm"])
        .output()
        .expect("binary runs");
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("task"), "{stderr}");
    assert!(stderr.contains("usage"), "{stderr}");
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let output = bin().arg("frobnicate").output().expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("usage"));
}

#[test]
fn compare_writes_both_conditions_and_joint_summary() {
    let out = tmp("compare");
    let _ = std::fs::remove_dir_all(&out);
    let status = bin()
        .args([
            "compare",
            "--task",
            "copy",
            "--episodes",
            "40",
            "--batch-size",
            "10",
            "--seed",
            "3",
            "--layers",
            "1",
            "--d-model",
            "16",
            "--heads",
            "2",
            "--max-new",
            "8",
            "--out",
        ])
        .arg(&out)
        .status()
        .expect("binary runs");
    assert!(status.success());
    assert!(out.join("pgsrm/metrics.csv").exists());
    assert!(out.join("binary/metrics.csv").exists());
    let summary = std::fs::read_to_string(out.join("compare_summary.txt")).unwrap();
    assert!(summary.contains("init_match = true"), "{summary}");
}

#[test]
fn eval_reports_metrics_from_a_checkpoint() {
    let out = tmp("eval-train");
    let _ = std::fs::remove_dir_all(&out);
    assert!(bin()
        .args([
            "train",
            "--task",
            "antonym",
            "--reward",
            "binary",
            "--episodes",
            "50",
            "--batch-size",
            "50",
            "--seed",
            "2",
            "--layers",
            "1",
            "--d-model",
            "16",
            "--heads",
            "2",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let output = bin()
        .args(["eval", "--task", "antonym", "--checkpoint"])
        .arg(out.join("checkpoint.final"))
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("records = 40"), "{stdout}");
    assert!(stdout.contains("mean_pgsrm"), "{stdout}");
    assert!(stdout.contains("binary_accuracy"), "{stdout}");
}

#[test]
fn inspect_config_round_trips_through_a_file() {
    let dir = tmp("inspect");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "[run]\ntask = categorize\nreward = binary\nout = runs/x\n[ppo]\nalpha = 2.5\n",
    )
    .unwrap();
    let output = bin()
        .args(["inspect-config", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "11"])
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("task = categorize"), "{stdout}");
    assert!(stdout.contains("alpha = 2.5"), "{stdout}");
    assert!(stdout.contains("seed = 11"), "{stdout}");
    // Flag overrides the file.
    let output = bin()
        .args(["inspect-config", "--config"])
        .arg(&cfg_path)
        .args(["--alpha", "6"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&output.stdout).contains("alpha = 6"));
}

#[test]
fn gradcheck_subcommand_passes() {
    let output = bin()
        .args(["gradcheck", "--batches", "1", "--seed", "5"])
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("result = PASS"));
}
