use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mir(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mir"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("MIR_CACHE_DIR")
        .args(args)
        .output()
        .expect("spawn mir")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mir(dir, args);
    assert!(
        out.status.success(),
        "mir {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A fresh directory holding the default fixture in `fx/`.
fn workspace() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["fixture", "--proposals", "50", "--seed", "1", "--out-dir", "fx"]);
    tmp
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn fixture_passes_its_checker() {
    let tmp = workspace();
    let d = tmp.path();
    assert!(read(d, "fx/check.txt").is_empty());
    let topics: serde_json::Value = serde_json::from_slice(&read(d, "fx/topics.json")).unwrap();
    assert_eq!(topics["proposal_topic"].as_object().unwrap().len(), 50);
    assert_eq!(String::from_utf8(read(d, "fx/proposals.jsonl")).unwrap().lines().count(), 50);
    let again = tempfile::tempdir().unwrap();
    ok(again.path(), &["fixture", "--seed", "1", "--out-dir", "fx"]);
    for name in ["proposals.jsonl", "papers.jsonl", "citations.jsonl", "topics.json"] {
        assert_eq!(read(d, &format!("fx/{name}")), read(again.path(), &format!("fx/{name}")), "{name}");
    }
}

#[test]
fn pipeline_artifacts_are_deterministic() {
    let tmp = workspace();
    let d = tmp.path();
    let before: Vec<Vec<u8>> = files(&d.join("fx")).iter().map(|p| fs::read(p).unwrap()).collect();
    for run in ["a", "b"] {
        ok(d, &["synth", "--data-dir", "fx", "--seed", "7", "--synth-epochs", "2", "--out-dir", &format!("{run}/synth")]);
        ok(d, &[
            "train", "--data-dir", "fx", "--seed", "7", "--epochs", "3", "--learning-rate", "0.5",
            "--out-dir", &format!("{run}/train"),
        ]);
        ok(d, &[
            "embed", "--data-dir", "fx", "--checkpoint", &format!("{run}/train/encoder.ckpt"),
            "--out-dir", &format!("{run}/embed"),
        ]);
        ok(d, &[
            "retrieve", "--data-dir", "fx", "--embeddings-dir", &format!("{run}/embed"),
            "--setting", "extended", "--out-dir", &format!("{run}/retrieve"),
        ]);
    }
    for artifact in [
        "synth/triplets.jsonl",
        "synth/skips.jsonl",
        "train/encoder.ckpt",
        "train/losses.jsonl",
        "embed/papers.emb",
        "embed/proposals.emb",
        "retrieve/rankings.jsonl",
    ] {
        let a = read(d, &format!("a/{artifact}"));
        assert!(!a.is_empty() || artifact.ends_with("skips.jsonl"), "{artifact} empty");
        assert_eq!(a, read(d, &format!("b/{artifact}")), "{artifact} differs");
    }
    let after: Vec<Vec<u8>> = files(&d.join("fx")).iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after, "inputs changed");
}

#[test]
fn eval_reports_requested_columns() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["train", "--data-dir", "fx", "--epochs", "1", "--out-dir", "train"]);
    ok(d, &["embed", "--data-dir", "fx", "--checkpoint", "train/encoder.ckpt", "--out-dir", "embed"]);
    ok(d, &["retrieve", "--data-dir", "fx", "--embeddings-dir", "embed", "--out-dir", "rank"]);
    let stdout = ok(d, &["eval", "--data-dir", "fx", "--rankings", "rank/rankings.jsonl", "--k", "3", "--k", "5", "--out-dir", "eval"]);
    let tsv = String::from_utf8(read(d, "eval/eval.tsv")).unwrap();
    assert_eq!(stdout, tsv);
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("setting\tR@3\tR@5\tmAP"));
    let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(row[0], "restricted");
    for v in &row[1..] {
        let x: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
}

#[test]
fn elbow_picks_a_cutoff_from_dev_rankings() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["train", "--data-dir", "fx", "--epochs", "1", "--out-dir", "train"]);
    ok(d, &["embed", "--data-dir", "fx", "--checkpoint", "train/encoder.ckpt", "--out-dir", "embed"]);
    ok(d, &["retrieve", "--data-dir", "fx", "--embeddings-dir", "embed", "--split", "dev", "--out-dir", "dev"]);
    ok(d, &["elbow", "--data-dir", "fx", "--rankings", "dev/rankings.jsonl", "--k-max", "20", "--out-dir", "elbow"]);
    let v: serde_json::Value = serde_json::from_slice(&read(d, "elbow/elbow.json")).unwrap();
    let k = v["k"].as_u64().unwrap();
    assert!((1..=20).contains(&k));
    assert_eq!(String::from_utf8(read(d, "elbow/coverage.tsv")).unwrap().lines().count(), 21);
}

#[test]
fn every_run_appends_a_manifest() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["stats", "--data-dir", "fx", "--out-dir", "stats"]);
    ok(d, &["stats", "--data-dir", "fx", "--out-dir", "stats"]);
    let text = String::from_utf8(read(d, "stats/manifest.jsonl")).unwrap();
    let entries: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), 2);
    let e = &entries[0];
    assert_eq!(e["command"], "stats");
    assert_eq!(e["status"], "ok");
    assert_eq!(e["inputs"].as_array().unwrap().len(), 3);
    let artifacts: Vec<&str> = e["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert!(artifacts.iter().any(|p| p.ends_with("stats.tsv")));
    for a in e["artifacts"].as_array().unwrap() {
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
    let fx: Vec<serde_json::Value> = String::from_utf8(read(d, "fx/manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(fx[0]["seed"], 1);
}

#[test]
fn replay_reproduces_a_training_run() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["train", "--data-dir", "fx", "--epochs", "2", "--seed", "3", "--out-dir", "train"]);
    let out = ok(d, &["replay", "--manifest", "train/manifest.jsonl", "--out-dir", "again"]);
    assert!(out.contains("3 artifacts, 0 differ"), "{out}");
    assert_eq!(read(d, "train/encoder.ckpt"), read(d, "again/encoder.ckpt"));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = workspace();
    let d = tmp.path();
    fs::write(d.join("run.json"), r#"{"data_dir": "fx", "synth": {"alpha": 1.0, "epochs": 1}, "seed": 5}"#).unwrap();
    ok(d, &["synth", "--config", "run.json", "--alpha", "0", "--out-dir", "s"]);
    let text = String::from_utf8(read(d, "s/triplets.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.contains("\"negative_class\":\"soft\"")));
    let m: serde_json::Value = serde_json::from_str(String::from_utf8(read(d, "s/manifest.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(m["config"]["synth"]["alpha"], 0.0);
    assert_eq!(m["config"]["synth"]["seed"], 5);
}

#[test]
fn exit_codes() {
    let tmp = workspace();
    let d = tmp.path();
    assert_eq!(code(&mir(d, &["eval", "--no-such-flag"])), 1);
    assert_eq!(code(&mir(d, &["frobnicate"])), 1);
    assert_eq!(code(&mir(d, &["--help"])), 0);
    assert_eq!(code(&mir(d, &["eval", "--data-dir", "missing", "--rankings", "x", "--out-dir", "o"])), 1);
    assert_eq!(code(&mir(d, &["synth", "--data-dir", "fx", "--alpha", "1.5", "--out-dir", "o"])), 1);
    assert_eq!(code(&mir(d, &["stats", "--data-dir", "fx"])), 1);
    fs::write(d.join("bad.json"), r#"{"sede": 1}"#).unwrap();
    assert_eq!(code(&mir(d, &["stats", "--config", "bad.json", "--out-dir", "o"])), 1);
    // the fixture is not the released dataset
    assert_eq!(code(&mir(d, &["stats", "--data-dir", "fx", "--check-released", "--out-dir", "o"])), 2);
    assert_eq!(code(&mir(d, &["ingest", "--data-dir", "fx", "--out-dir", "fx"])), 1);
}

#[test]
fn rerank_without_a_judge_aborts_but_keeps_artifacts() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["train", "--data-dir", "fx", "--epochs", "1", "--out-dir", "train"]);
    ok(d, &["embed", "--data-dir", "fx", "--checkpoint", "train/encoder.ckpt", "--out-dir", "embed"]);
    ok(d, &["retrieve", "--data-dir", "fx", "--embeddings-dir", "embed", "--out-dir", "rank"]);
    fs::write(d.join("judge.json"), r#"{"judge": {"retry": {"backoff_ms": 0}}}"#).unwrap();
    let out = mir(d, &[
        "rerank", "--config", "judge.json", "--data-dir", "fx", "--rankings", "rank/rankings.jsonl",
        "--rerank-k", "3", "--out-dir", "rr",
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(read(d, "rr/reranked.jsonl"), read(d, "rank/rankings.jsonl"));
    let cost: serde_json::Value = serde_json::from_slice(&read(d, "rr/cost.json")).unwrap();
    assert_eq!(cost["unreachable"], 3);
    let m = String::from_utf8(read(d, "rr/manifest.jsonl")).unwrap();
    assert!(m.contains("\"status\":\"error: judge backend unreachable"));
}
