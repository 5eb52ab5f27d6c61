//! End-to-end tests of the `clref` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn clref() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clref"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let config = r#"{
        "network": {"hidden_layers": [12], "activation": "relu"},
        "objective": {"method": "er", "alpha": 1.0},
        "refresh": {"enabled": true, "gamma": 0.03, "steps": 1, "interval": 2, "noise": false},
        "fisher": {"damping": 0.03, "max_examples": 200},
        "stream": {
            "scenario": "domain_il",
            "num_tasks": 2,
            "train_per_task": 300,
            "test_per_task": 100,
            "seed": 11,
            "generator": {
                "kind": "permuted",
                "base": {"kind": "synthetic_gaussian", "classes": 4, "dim": 12, "mean_radius": 1.5, "covariance_scale": 0.4}
            }
        },
        "learning_rate": 0.05,
        "batch_size": 32,
        "buffer_capacity": 100,
        "seeds": [1, 2]
    }"#;
    let path = dir.join("tiny.json");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn run_produces_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("results");
    let output = clref()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("ACC"), "stdout: {stdout}");

    let record = out.join("record_er_refresh_seed1.json");
    assert!(record.exists());
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    assert_eq!(parsed["config"]["objective"]["method"], "er");
    assert!(parsed["outcome"]["metrics"]["acc"].as_f64().unwrap() > 0.0);

    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.trim().lines().count(), 3); // header + 2 seeds
    assert!(csv.starts_with("method,refresh,gamma,steps,interval,buffer,seed,acc,bwt,seconds"));
}

#[test]
fn run_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"unexpected": 1}"#).unwrap();
    let output = clref().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!output.status.success());
}

#[test]
fn single_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("results");
    let output = clref()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out.join("record_er_refresh_seed7.json").exists());
    assert!(!out.join("record_er_refresh_seed1.json").exists());
}

#[test]
fn sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("sweep");
    let output = clref()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--gamma", "0.02,0.03", "--steps", "1,2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    // header + 4 cells x 2 seeds
    assert_eq!(csv.trim().lines().count(), 9);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("gamma"), "stdout: {stdout}");
}

#[test]
fn gradcheck_passes_at_default_tolerance() {
    let output = clref()
        .args(["gradcheck", "--instances", "5"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    for preset in ["finetune", "er", "derpp", "oewc", "cpr", "joint"] {
        assert!(stdout.contains(preset), "missing {preset} in {stdout}");
    }
}

#[test]
fn theory_prints_table_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let settings = dir.path().join("theory.json");
    fs::write(&settings, r#"{"instances": 6, "s": 1e-3}"#).unwrap();
    let out = dir.path().join("theory_out");
    let output = clref()
        .args(["theory", "--config"])
        .arg(&settings)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("cosine"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theory.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
    assert!(json[0]["mean_cosine"].as_f64().unwrap() > 0.9);
}

#[test]
fn bench_reports_overhead_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("bench");
    let output = clref()
        .args(["bench", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("overhead ratio"), "stdout: {stdout}");
}
