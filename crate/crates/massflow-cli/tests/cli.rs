//! End-to-end tests of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_massflow")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("massflow_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let dir = tmpdir("sim");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--profile",
            "uniform",
            "--levels",
            "4",
            "--t-end",
            "0.01",
            "--dt",
            "1e-4",
            "--grid",
            "uniform:5",
            "--replicates",
            "2",
            "--seed",
            "7",
            "--out",
            "run1",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("run1/trajectory.csv")).unwrap();
    assert!(csv.starts_with("replicate,t,cluster_idx,position,mass,index_lo,index_hi\n"));
    assert!(csv.lines().count() > 10);
    let manifest = std::fs::read_to_string(dir.join("run1/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["command"], "simulate");
    assert_eq!(parsed["seed"], 7);
    assert!(parsed["config_hash"].as_str().unwrap().len() == 16);
}

#[test]
fn simulate_reruns_byte_identical_across_threads() {
    let dir = tmpdir("det");
    let args_base = [
        "simulate",
        "--profile",
        "uniform",
        "--levels",
        "5",
        "--t-end",
        "0.005",
        "--dt",
        "1e-4",
        "--grid",
        "uniform:3",
        "--replicates",
        "3",
        "--seed",
        "11",
    ];
    for (out_dir, threads) in [("a", "1"), ("b", "2"), ("c", "4")] {
        let mut args: Vec<&str> = args_base.to_vec();
        args.extend(["--out", out_dir, "--threads", threads]);
        let out = run_in(&dir, &args);
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.join("a/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.join("b/trajectory.csv")).unwrap();
    let c = std::fs::read(dir.join("c/trajectory.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);

    // Re-run from the persisted manifest alone.
    let out = run_in(
        &dir,
        &["simulate", "--config", "a/manifest.json", "--out", "d"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = std::fs::read(dir.join("d/trajectory.csv")).unwrap();
    assert_eq!(a, d);
}

#[test]
fn estimate_writes_curve_and_fit() {
    let dir = tmpdir("est");
    let out = run_in(
        &dir,
        &[
            "estimate",
            "--observable",
            "inverse_mass",
            "--fit",
            "--profile",
            "uniform",
            "--levels",
            "5",
            "--t-end",
            "0.01",
            "--grid",
            "geometric:0.7:8",
            "--replicates",
            "400",
            "--seed",
            "3",
            "--out",
            "est",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("est/curve.csv")).unwrap();
    assert!(csv.starts_with("observable,t,n,mean,se,ci_lo,ci_hi\n"));
    // Monotone time column.
    let ts: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("est/fit.json")).unwrap()).unwrap();
    assert!(fit["slope"].is_number());
    assert!(fit["stderr"].is_number());
}

#[test]
fn error_paths_use_exit_code_two() {
    let dir = tmpdir("err");
    // Missing profile file, diagnostic names the path.
    let out = run_in(&dir, &["simulate", "--profile", "missing_profile.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing_profile.json"));

    // Zero replicates.
    let out = run_in(&dir, &["estimate", "--replicates", "0"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown observable.
    let out = run_in(&dir, &["estimate", "--observable", "nonsense", "--replicates", "10"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown suite.
    let out = run_in(&dir, &["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));

    // Bad usage (clap).
    let out = run_in(&dir, &["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // Converge needs at least 3 levels.
    let out = run_in(
        &dir,
        &["converge", "--profile", "power", "--alpha", "2.0", "--u0", "0", "--level-list", "4", "--replicates", "50"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_quick_center_of_mass_passes() {
    let dir = tmpdir("verify");
    let out = run_in(
        &dir,
        &[
            "verify",
            "--suite",
            "center_of_mass",
            "--quick",
            "--seed",
            "5",
            "--out",
            "v",
        ],
    );
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("v/report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["verdict"], "pass");
}

#[test]
fn converge_runs_on_square_profile() {
    let dir = tmpdir("conv");
    let out = run_in(
        &dir,
        &[
            "converge",
            "--profile",
            "power",
            "--alpha",
            "2.0",
            "--u0",
            "0",
            "--level-list",
            "3,4,5",
            "--at",
            "0.5",
            "--t",
            "0.005",
            "--replicates",
            "400",
            "--seed",
            "9",
            "--out",
            "c",
        ],
    );
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("c/report.json").exists());
}
