//! End-to-end CLI tests: exit codes, artifact layout, determinism and
//! manifest replay.

use std::path::Path;
use std::process::Command;

fn nssinet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nssinet"))
}

const TINY_CONFIG: &str = r#"{
  "seed": 11,
  "synth": {
    "n_per_cell": 2, "channels": 3, "rate": 32,
    "trials_per_subject": 2, "trial_seconds": 2,
    "class_effect": {"channels": [0], "band_hz": [6.0, 10.0], "amplitude": 1.5, "base_amplitude": 2.0},
    "gender_effect": {"channels": [2], "band_hz": [6.0, 10.0], "amplitude": 0.5, "base_amplitude": 2.0},
    "subject_sigma": 0.05
  },
  "train": {"epochs": 1, "batch_labeled": 4, "batch_unlabeled": 2, "batch_target": 2, "head_hidden": 8},
  "weights": {"lambda": 0.01},
  "eval": {"k": 2, "normalize": "none", "ratio_grid": [50.0, 75.0]}
}"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

/// Directory contents as (relative path, bytes), skipping the manifest
/// whose timestamps legitimately differ between runs.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                if rel == "manifest.json" {
                    continue;
                }
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn config_errors_exit_with_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"sed": 1}"#).unwrap();
    let out = nssinet()
        .args(["cv", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_cohort_directory_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(&cfg, r#"{"cohort_dir": "/does/not/exist"}"#).unwrap();
    let out = nssinet()
        .args(["cv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_on_an_empty_directory_exits_1_with_no_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = nssinet()
        .arg("report")
        .arg(&empty)
        .arg("--out")
        .arg(tmp.path().join("bundle"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no manifest found"));
}

#[test]
fn synth_then_cv_then_report_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());

    // synth
    let synth_dir = tmp.path().join("synth-run");
    let out = nssinet()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&synth_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(synth_dir.join("cohort/manifest.json").exists());
    assert!(synth_dir.join("cohort/ground_truth.json").exists());
    assert!(synth_dir.join("manifest.json").exists());

    // cv on the written cohort
    let cfg2 = tmp.path().join("config2.json");
    let mut parsed: serde_json::Value =
        serde_json::from_str(TINY_CONFIG).unwrap();
    parsed["cohort_dir"] =
        serde_json::Value::String(synth_dir.join("cohort").display().to_string());
    std::fs::write(&cfg2, serde_json::to_string_pretty(&parsed).unwrap()).unwrap();
    let cv_dir = tmp.path().join("cv-run");
    let out = nssinet()
        .args(["cv", "--config"])
        .arg(&cfg2)
        .arg("--out")
        .arg(&cv_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cv_dir.join("cv_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["per_fold"].as_array().unwrap().len(), 2);
    assert!(cv_dir.join("loss_curves.csv").exists());
    assert!(cv_dir.join("confusion.csv").exists());

    // report bundle
    let bundle = tmp.path().join("bundle");
    let out = nssinet().arg("report").arg(&cv_dir).arg("--out").arg(&bundle).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(bundle.join("summary.json").exists());
    assert!(bundle.join("summary.csv").exists());
}

#[test]
fn identical_config_and_seed_give_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = nssinet()
            .args(["cv", "--config"])
            .arg(&cfg)
            .args(["--seed", "42"])
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn replaying_the_config_snapshot_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let first = tmp.path().join("first");
    let out = nssinet()
        .args(["cv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // Replay from the resolved snapshot the run left behind.
    let replay = tmp.path().join("replay");
    let out = nssinet()
        .args(["cv", "--config"])
        .arg(first.join("config.json"))
        .arg("--out")
        .arg(&replay)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(dir_contents(&first), dir_contents(&replay));
}

#[test]
fn occupied_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let dir = tmp.path().join("occupied");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("already.txt"), "here").unwrap();
    let out = nssinet()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
