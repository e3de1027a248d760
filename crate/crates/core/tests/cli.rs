mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn segvote(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segvote")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = segvote(args);
    assert!(out.status.success(), "segvote {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn golden_pipeline_reproduces_the_committed_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("golden_corpus.jsonl");
    let model = dir.path().join("model.json");
    let verdicts = dir.path().join("verdicts.jsonl");
    let report = dir.path().join("report.json");
    let csv = dir.path().join("confusion.csv");
    ok(&["train-scorer", "--in", s(&corpus), "--out", s(&model), "--seed", "7", "--epochs", "20", "--dim-bits", "14"]);
    let scorer = format!("builtin:{}", s(&model));
    ok(&["detect", "--in", s(&corpus), "--scorer", &scorer, "--scheme", "hard", "--threshold", "0.85", "--out", s(&verdicts)]);
    ok(&["evaluate", "--verdicts", s(&verdicts), "--gold", s(&corpus), "--slice", "generator", "--out", s(&report), "--csv", s(&csv)]);

    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(fixture("golden_report.json")).unwrap());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(fixture("golden_confusion.csv")).unwrap());

    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["counts"]["tp"], 7);
    assert_eq!(r["counts"]["fn"], 3);
    assert_eq!(r["f1"], 14.0 / 17.0);
    assert_eq!(r["slices"]["human"]["recall"], Value::Null);

    // verdict lines follow the documented schema
    let lines = jsonl(&verdicts);
    assert_eq!(lines.len(), 20);
    for v in &lines {
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["doc_id", "predicted", "aggregate", "scheme", "threshold", "segments"]);
        assert_eq!(v["scheme"], "hard");
        for seg in v["segments"].as_array().unwrap() {
            assert!(seg.get("weight").is_none());
            let p = seg["p_machine"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}

#[test]
fn segment_writes_spans_and_word_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    std::fs::write(&input, "{\"id\":\"a\",\"text\":\"Hello world. How are you? Fine!\"}\n").unwrap();
    let out = dir.path().join("s.jsonl");
    ok(&["segment", "--in", s(&input), "--out", s(&out)]);
    let segs = jsonl(&out);
    let texts: Vec<&str> = segs.iter().map(|v| v["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["Hello world.", "How are you?", "Fine!"]);
    assert_eq!(segs[1]["start"], 13);
    assert_eq!(segs[1]["end"], 25);
    assert_eq!(segs[1]["word_count"], 3);
}

#[test]
fn stats_reports_counts() {
    let out = ok(&["stats", "--in", s(&fixture("golden_corpus.jsonl"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total"], 20);
    assert_eq!(v["by_language"]["en"], 12);
}

#[test]
fn detect_through_an_exec_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.jsonl");
    let scorer = format!("exec:{}", common::shell_scorer(None));
    ok(&["detect", "--in", s(&fixture("golden_corpus.jsonl")), "--scorer", &scorer, "--out", s(&out), "--workers", "2"]);
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 20);
    // every segment scores 0.97 > 0.95
    assert!(lines.iter().all(|v| v["predicted"] == 1));
}

#[test]
fn dead_exec_scorer_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.jsonl");
    let res = segvote(&["detect", "--in", s(&fixture("golden_corpus.jsonl")), "--scorer", "exec:exit 0", "--out", s(&out), "--timeout", "2"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(segvote(&["detect", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(segvote(&["nonsense"]).status.code(), Some(2));
    let c = fixture("golden_corpus.jsonl");
    assert_eq!(segvote(&["detect", "--in", s(&c), "--scorer", "builtin:x", "--scheme", "median", "--out", "/dev/null"]).status.code(), Some(2));
    assert_eq!(segvote(&["detect", "--in", s(&c), "--scorer", "builtin:x", "--threshold", "0", "--out", "/dev/null"]).status.code(), Some(2));
    assert_eq!(segvote(&["--help"]).status.code(), Some(0));
}

#[test]
fn strict_mode_rejects_malformed_records() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    std::fs::write(&input, "{\"id\":\"a\",\"text\":\"Fine.\"}\nnot json\n").unwrap();
    let out = dir.path().join("s.jsonl");
    assert_eq!(segvote(&["segment", "--in", s(&input), "--out", s(&out), "--strict"]).status.code(), Some(1));
    ok(&["segment", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(jsonl(&out).len(), 1);
}

#[test]
fn syntax_train_and_detect() {
    let dir = tempfile::tempdir().unwrap();
    let tagged = dir.path().join("tagged.jsonl");
    let mut text = String::new();
    for (seq, label) in common::grammar_corpus(150, 5) {
        let names = segvote::syntax::upos_decode(&seq);
        let row = serde_json::json!({"id": seq.doc_id, "tags": names, "label": label.as_u8()});
        text.push_str(&row.to_string());
        text.push('\n');
    }
    text.push_str("{\"id\":\"untagged\",\"text\":\"no tags here\"}\n");
    std::fs::write(&tagged, text).unwrap();
    let model = dir.path().join("syntax.json");
    let report = dir.path().join("epochs.json");
    ok(&[
        "train-syntax", "--in", s(&tagged), "--out", s(&model), "--epochs", "10", "--embed-dim", "8", "--hidden", "8",
        "--layers", "1", "--valid-fraction", "0.25", "--report", s(&report),
    ]);
    let epochs: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(epochs["epochs"].as_array().unwrap().len(), 10);
    let out = dir.path().join("v.jsonl");
    ok(&["detect-syntax", "--in", s(&tagged), "--model", s(&model), "--out", s(&out)]);
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 300);
    let correct = lines
        .iter()
        .filter(|v| (v["doc_id"].as_str().unwrap().starts_with('m')) == (v["predicted"] == 1))
        .count();
    assert!(correct >= 270, "{correct}/300");
}

#[test]
fn gradcheck_command() {
    let out = ok(&["gradcheck", "--seeds", "3"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed 2"));
    // an impossible tolerance fails with exit code 1
    assert_eq!(segvote(&["gradcheck", "--seeds", "1", "--tolerance", "1e-30"]).status.code(), Some(1));
}
