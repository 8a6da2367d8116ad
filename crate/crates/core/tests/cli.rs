//! The `nilm` binary end to end, as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{"dataset": {"events_per_class": 30}, "train": {"epochs": 15}}"#;

fn nilm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = nilm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    ok(dir.path(), &["gen", "--seed", "4", "--out", "wave.csv"]);
    dir
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let help = nilm(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("bench JSON"));
    let bad_flag = nilm(dir.path(), &["gen", "--frobnicate"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_flag.stderr).contains("Usage"));
    assert_eq!(
        nilm(dir.path(), &["events", "--input", "missing.csv"]).status.code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.json"), "{\"dataset\": {\"ratios\": [1, 1, 1]}}").unwrap();
    assert_eq!(
        nilm(dir.path(), &["--config", "bad.json", "gen"]).status.code(),
        Some(2)
    );
}

#[test]
fn features_and_events_from_a_generated_waveform() {
    let dir = setup();
    let csv = ok(dir.path(), &["features", "--input", "wave.csv"]);
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("frame_idx,P_W,S_VA,Q_var,h1_mag,h3_mag"));
    assert_eq!(header.split(',').count(), 4 + 16);
    assert_eq!(lines.count(), 40);

    for (mode, len) in [("power", 20), ("current", 17)] {
        let jsonl = ok(
            dir.path(),
            &["--mode", mode, "events", "--input", "wave.csv", "--dump-dtw", "dtw.csv"],
        );
        let events: Vec<Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(events.len(), 4, "{mode}");
        assert!(events.iter().all(|e| e["feature"].as_array().unwrap().len() == len));
        let table = std::fs::read_to_string(dir.path().join("dtw.csv")).unwrap();
        assert_eq!(table.lines().count(), 128);
    }
}

#[test]
fn current_mode_model_classifies_dual_channel_recording() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "--config",
            "small.json",
            "--mode",
            "current",
            "train",
            "--out",
            "model.json",
        ],
    );
    let model: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["mode"], "current");
    assert_eq!(model["architecture"]["input_len"], 17);

    let out: Value = serde_json::from_str(&ok(
        dir.path(),
        &[
            "--config",
            "small.json",
            "classify",
            "--model",
            "model.json",
            "--input",
            "wave.csv",
        ],
    ))
    .unwrap();
    let preds = out["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 4);
    assert!(preds.iter().all(|p| p["probabilities"].as_array().unwrap().len() == 5));

    // A power-mode run cannot use a current-mode model.
    let clash = nilm(
        dir.path(),
        &[
            "--config",
            "small.json",
            "--mode",
            "power",
            "classify",
            "--model",
            "model.json",
            "--input",
            "wave.csv",
        ],
    );
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn gen_and_eval_are_reproducible() {
    let dir = setup();
    let base = ["--config", "small.json", "--seed", "12"];
    let run = |extra: &[&str]| ok(dir.path(), &[&base[..], extra].concat());
    run(&["gen", "--dataset", "--out", "ds.json"]);
    run(&["train", "--dataset", "ds.json", "--out", "m.json"]);
    let a = run(&["eval", "--model", "m.json", "--dataset", "ds.json"]);
    let b = run(&["eval", "--model", "m.json"]);
    assert_eq!(a, b, "a dataset file and regeneration from the seed must agree");
    let knn1 = run(&["eval", "--knn"]);
    let knn2 = run(&["eval", "--knn"]);
    assert_eq!(knn1, knn2);
    let m: Value = serde_json::from_str(&knn1).unwrap();
    let total: u64 = m["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, 5 * 6);
}

#[test]
fn bench_reports_skip_reorder_memory() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(dir.path(), &["bench", "--reps", "200"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["skip_reorder_memory_reduction_pct"], 20.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fft_skip_reorder"));
}
