//! End-to-end checks of the `gensm` binary: artifact layout, flag
//! overrides, exit codes, and byte-level rerun stability.

use std::path::Path;
use std::process::{Command, Output};

fn gensm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gensm"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing artifact {name}: {e}"))
}

#[test]
fn approx_accuracy_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = gensm(&[
        "approx-accuracy",
        "--channels",
        "3",
        "--mc-samples",
        "1000",
        "--snr-db=-5,5",
        "--nr",
        "2,4",
        "--seed",
        "99",
        "--out",
        out,
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));

    let csv = read(dir.path(), "approx_accuracy.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_r,snr_db,r_cf_mean,r_mc_mean,r_mc_stderr_mean,n_channels"
    );
    assert_eq!(lines.count(), 4);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["experiment"], "approx-accuracy");
    assert_eq!(manifest["spec"]["seed"], 99);
    assert_eq!(manifest["spec"]["channels"], 3);
    assert_eq!(manifest["spec"]["snr_db"], serde_json::json!([-5.0, 5.0]));
}

#[test]
fn optimize_one_writes_all_artifacts_and_honors_gradient_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = gensm(&[
        "optimize-one",
        "--mc-samples",
        "1000",
        "--snr-db",
        "5",
        "--nr",
        "4",
        "--gradient",
        "reduced",
        "--restarts",
        "2",
        "--out",
        out,
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));

    let channel: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "channel.json")).unwrap();
    assert_eq!(channel["n_r"], 4);
    assert_eq!(channel["n_t"], 8);

    let trace: serde_json::Value = serde_json::from_str(&read(dir.path(), "trace.json")).unwrap();
    assert_eq!(trace["restarts"].as_array().unwrap().len(), 2);

    let summary = read(dir.path(), "optimizer_summary.csv");
    assert!(summary.starts_with(
        "gradient,fallback_used,restarts,total_iterations,converged,init_r_cf,best_r_cf"
    ));

    let report = read(dir.path(), "report.csv");
    assert!(report
        .starts_with("config_hash,seed,snr_db,r_cf,apm_mi,spatial_lb,r_mc,r_mc_stderr,n_samples"));
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n_k": 3}"#).unwrap();
    let result = gensm(&[
        "approx-accuracy",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("error:"));

    let result = gensm(&[
        "se-compare",
        "--channels",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_code_3() {
    // One scattering path makes the channel rank 1 while n_rf = 2; the
    // reduced gradient reports rank deficiency and fallback is disabled.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rank1.json");
    std::fs::write(
        &cfg,
        r#"{"paths": 1, "mc_samples": 100,
            "optimizer": {"gradient_kind": "reduced", "fallback_to_full": false}}"#,
    )
    .unwrap();
    let result = gensm(&[
        "optimize-one",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&result.stderr).contains("rank"));
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let args = [
        "se-compare",
        "--channels",
        "2",
        "--mc-samples",
        "800",
        "--snr-db=0,10",
        "--seed",
        "7",
    ];
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut run_a = args.to_vec();
    run_a.extend(["--out", dir_a.path().to_str().unwrap()]);
    let mut run_b = args.to_vec();
    run_b.extend(["--out", dir_b.path().to_str().unwrap()]);
    assert!(gensm(&run_a).status.success());
    assert!(gensm(&run_b).status.success());
    let a = read(dir_a.path(), "se_compare.csv");
    let b = read(dir_b.path(), "se_compare.csv");
    assert_eq!(a, b);
    assert!(a.lines().count() == 3);
}
