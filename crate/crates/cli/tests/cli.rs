//! End-to-end tests of the compiled binary: exit codes, artifact layout,
//! determinism across invocations and thread counts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tanklab"))
}

/// A reduced-budget config that still exercises every code path.
fn tiny_config_json() -> serde_json::Value {
    serde_json::json!({
        "master_seed": 90125,
        "corpus": { "n_source": 2, "n_target": 2 },
        "experiment": {
            "checkpoints": [4],
            "n_seeds": 1,
            "train": { "epochs": 2 }
        },
        "control": {
            "days": [1],
            "variants": [
                { "variant": "local", "checkpoint_weeks": 4 },
                { "variant": "ptm_large" }
            ]
        }
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn full_flow_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_json());
    let config = config.to_str().unwrap();
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();

    run_ok(&["simulate", "--config", config, "--out", out]);
    let series = out_dir.join("corpus/target/t00.csv");
    assert!(series.is_file());
    // Header plus one row per quarter-hour of the year.
    assert_eq!(fs::read_to_string(&series).unwrap().lines().count(), 1 + 365 * 96);

    run_ok(&["experiment", "--config", config, "--out", out]);
    for name in ["learning_curves.csv", "cross_matrix.csv", "summary.json"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["variants"].as_array().unwrap().len(), 5);

    run_ok(&["control", "--config", config, "--out", out]);
    let outcomes = fs::read_to_string(out_dir.join("control_outcomes.csv")).unwrap();
    // 2 systems x 1 day x (oracle + 2 variants) + header.
    assert_eq!(outcomes.lines().count(), 1 + 2 * 3);

    run_ok(&["report", "--config", config, "--out", out]);
    let fig2 = fs::read_to_string(out_dir.join("fig2_data.csv")).unwrap();
    assert_eq!(fig2.lines().count(), 1 + 5); // 5 variants x 1 checkpoint
    let fig3 = fs::read_to_string(out_dir.join("fig3_data.csv")).unwrap();
    assert_eq!(fig3.lines().count(), 1 + 4); // 2x2 matrix, long form
}

#[test]
fn simulate_is_deterministic_across_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_json());
    let config = config.to_str().unwrap();
    for out in ["a", "b"] {
        run_ok(&["simulate", "--config", config, "--out", dir.path().join(out).to_str().unwrap()]);
    }
    for rel in ["corpus/source/s01.csv", "corpus/target/t01.csv", "corpus/manifest.json"] {
        let a = fs::read(dir.path().join("a").join(rel)).unwrap();
        let b = fs::read(dir.path().join("b").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between runs");
    }
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_json());
    let config = config.to_str().unwrap();
    for (out, jobs) in [("j1", "1"), ("j4", "4")] {
        let out = dir.path().join(out);
        let out = out.to_str().unwrap();
        run_ok(&["simulate", "--config", config, "--out", out, "--jobs", jobs]);
        run_ok(&["experiment", "--config", config, "--out", out, "--jobs", jobs]);
    }
    for rel in ["summary.json", "learning_curves.csv", "cross_matrix.csv"] {
        let a = fs::read(dir.path().join("j1").join(rel)).unwrap();
        let b = fs::read(dir.path().join("j4").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between --jobs 1 and --jobs 4");
    }
}

#[test]
fn seed_override_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_json());
    let config = config.to_str().unwrap();
    for (out, seed) in [("s1", "11"), ("s2", "22")] {
        run_ok(&[
            "simulate",
            "--config",
            config,
            "--out",
            dir.path().join(out).to_str().unwrap(),
            "--seed",
            seed,
        ]);
    }
    let a = fs::read(dir.path().join("s1/corpus/target/t00.csv")).unwrap();
    let b = fs::read(dir.path().join("s2/corpus/target/t00.csv")).unwrap();
    assert_ne!(a, b, "different seeds must give different draws");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = tiny_config_json();
    // Inverted hysteresis band.
    bad["corpus"]["heterogeneity"] = serde_json::json!({
        "base_t_low_c": 58.0,
        "base_t_high_c": 42.0
    });
    let config = write_config(dir.path(), &bad);
    let out = bin()
        .args(["simulate", "--config", config.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Unknown keys are config errors too.
    let config = dir.path().join("unknown.json");
    fs::write(&config, "{\"master_seed\": 1, \"bogus\": true}").unwrap();
    let out = bin()
        .args(["simulate", "--config", config.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_without_corpus_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_json());
    let out = bin()
        .args(["experiment", "--config", config.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_model_files_warn_but_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config_json();
    cfg["control"]["variants"] = serde_json::json!([
        { "variant": "local", "checkpoint_weeks": 4 },
        // Checkpoint 8 was never trained under checkpoints = [4].
        { "variant": "local", "checkpoint_weeks": 8 }
    ]);
    let config = write_config(dir.path(), &cfg);
    let config = config.to_str().unwrap();
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    run_ok(&["simulate", "--config", config, "--out", out]);
    run_ok(&["experiment", "--config", config, "--out", out]);
    let res = run_ok(&["control", "--config", config, "--out", out]);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("warning"), "stderr: {stderr}");
    // Diagnostic rows have empty outcome fields.
    let outcomes = fs::read_to_string(out_dir.join("control_outcomes.csv")).unwrap();
    assert!(outcomes.lines().any(|l| l.contains(",8,1,,,,0")), "{outcomes}");
}
