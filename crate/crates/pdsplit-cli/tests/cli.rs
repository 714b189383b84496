//! End-to-end smoke tests for the four CLI verbs.

use std::path::Path;
use std::process::Command;

fn pdsplit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdsplit"))
}

#[test]
fn run_verb_default_demo() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdsplit()
        .args(["run", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("he-yuan"), "stdout: {stdout}");
    assert!(dir.path().join("trace-pdsa-cc.csv").exists());
    assert!(dir.path().join("summary-pdsa-cc.json").exists());
}

#[test]
fn run_verb_with_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
[problem]
family = "lasso"
p = 20
q = 50
s = 5
v = 0.5
seed = 3

[params]
theta = 0.198
eta = 1.1666666666666667
gamma_l2 = 1.5

[stopping]
metric_tol = 1e-6
max_iters = 100000
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = pdsplit()
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("trace-pdsa-cc.csv").exists());
}

#[test]
fn compare_verb_writes_three_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdsplit()
        .args(["compare", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["trace-pdsa-cc.csv", "trace-cp-pdhg.csv", "trace-pdac.csv", "compare-summary.json"]
    {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn grid_verb_renders_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdsplit()
        .args([
            "grid",
            "--out",
            dir.path().to_str().unwrap(),
            "--thetas",
            "1/2,1",
            "--etas",
            "1/2,1",
            "--gamma-rule",
            "scaled:0.9",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best cell"), "stdout: {stdout}");
    assert!(dir.path().join("grid.csv").exists());
}

#[test]
fn verify_verb_emits_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdsplit()
        .args(["verify", "--seed", "1", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("verify-summary.json").exists());
    assert!(Path::new(&dir.path().join("check-he-yuan-eigencheck.json")).exists());
    let summary = std::fs::read_to_string(dir.path().join("verify-summary.json")).unwrap();
    assert!(summary.contains("\"all_pass\": true"), "{summary}");
}

#[test]
fn invalid_parameters_fail_loudly() {
    let out = pdsplit().args(["run", "--theta", "2.5"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("theta"), "stderr: {stderr}");
}
