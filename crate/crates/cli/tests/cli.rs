use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn maskboost(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskboost"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str], dir: &Path) -> Value {
    let out = maskboost(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn lossless_training_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        &[
            "--json", "--seed", "2", "--out", "data.csv", "gen-data", "--n", "200",
        ],
        d,
    );
    let doc = ok_json(
        &[
            "--json",
            "train",
            "--data",
            "data.csv",
            "--d-ap",
            "4",
            "--lossless",
            "--full-payloads",
            "--transcript",
            "t.ndjson",
            "--pp-state",
            "pp.json",
        ],
        d,
    );
    assert_eq!(doc["status"], "completed");
    assert!(doc["train_auc"].as_f64().unwrap() > 0.9);
    let rep = ok_json(
        &[
            "--json",
            "replay",
            "--transcript",
            "t.ndjson",
            "--pp-state",
            "pp.json",
        ],
        d,
    );
    assert_eq!(rep["exchanges"], rep["verified"]);
    assert_eq!(
        rep["exchanges"].as_u64().unwrap() * 3,
        doc["messages"].as_u64().unwrap()
    );
}

#[test]
fn tampered_transcript_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        &["--json", "--out", "data.csv", "gen-data", "--n", "100"],
        d,
    );
    ok_json(
        &[
            "--json",
            "train",
            "--data",
            "data.csv",
            "--lossless",
            "--full-payloads",
            "--transcript",
            "t.ndjson",
            "--pp-state",
            "pp.json",
        ],
        d,
    );
    let text = std::fs::read_to_string(d.join("t.ndjson")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: Value = serde_json::from_str(&lines[1]).unwrap();
    rec["sha256"] = Value::String("00".repeat(32));
    lines[1] = rec.to_string();
    std::fs::write(d.join("t.ndjson"), lines.join("\n")).unwrap();
    let out = maskboost(
        &[
            "replay",
            "--transcript",
            "t.ndjson",
            "--pp-state",
            "pp.json",
        ],
        d,
    );
    assert!(!out.status.success());
}

#[test]
fn calibrate_reports_noise_and_accountant() {
    let dir = tempfile::tempdir().unwrap();
    let doc = ok_json(
        &[
            "--json",
            "calibrate",
            "--n",
            "400",
            "--candidates",
            "16",
            "--eps-ap",
            "2",
        ],
        dir.path(),
    );
    assert!(doc["sigma2"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["sigma1"], 1.0);
    assert_eq!(doc["accountant"]["mode"], "advanced");
    assert!(doc["per_query"]["ap"]["eps"].as_f64().unwrap() < 2.0);
}

#[test]
fn bound_accepts_negative_sums() {
    let dir = tempfile::tempdir().unwrap();
    let doc = ok_json(
        &[
            "--json", "bound", "--alpha", "0.5", "--kappa", "0.5", "--gl", "3", "--hl", "5",
            "--gr", "-2", "--hr", "4",
        ],
        dir.path(),
    );
    let v = doc["value"].as_f64().unwrap();
    assert!((0.0..=4.0).contains(&v));
}

#[test]
fn attacks_emit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let pp = ok_json(
        &["--json", "attack-pp", "--sigma2", "0", "--trials", "10"],
        dir.path(),
    );
    assert_eq!(pp["kind"], "attribute-inference");
    assert_eq!(pp["mean"], 1.0);
    let ap = ok_json(
        &[
            "--json",
            "attack-ap",
            "--c",
            "0",
            "--sigma2",
            "1",
            "--trials",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(ap["kind"], "label-inference");
    assert_eq!(ap["mean"], 1.0);
}

#[test]
fn run_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.cfg"),
        "# tiny sweep\nn = 200\nd_ap = 2\nd_pp = 2\nrounds = 2\ndepth = 2\ncandidates = 8\nmc_samples = 100000\neps_grid = 1, 4\nseeds = 0, 1\n",
    )
    .unwrap();
    let doc = ok_json(
        &["--json", "--config", "exp.cfg", "--out", "res.jsonl", "run"],
        d,
    );
    assert_eq!(doc["records"], 12);
    let jsonl = std::fs::read_to_string(d.join("res.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 12);
    let csv = std::fs::read_to_string(d.join("res.summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "learning_rate = 0.1\n").unwrap();
    let out = maskboost(&["--config", "bad.cfg", "run"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
