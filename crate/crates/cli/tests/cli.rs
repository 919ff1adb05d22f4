//! Exit codes and basic outputs of the `aqa` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn aqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqa")).args(args).output().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(aqa(&["--help"]).status.code(), Some(0));
    assert_eq!(aqa(&["--version"]).status.code(), Some(0));
    assert_eq!(aqa(&["predict", "--help"]).status.code(), Some(0));
}

#[test]
fn invalid_invocations_exit_with_1() {
    let data = fixture("tiny.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x").display().to_string();
    let cases: Vec<Vec<&str>> = vec![
        vec!["no-such-command"],
        vec!["stats", "--data", &data, "--bogus"],
        vec!["stats", "--data", "/no/such/file.jsonl"],
        vec!["stats", "--data", &data, "--lang", "de"],
        vec![
            "train-answerability",
            "--data",
            &data,
            "--features",
            "embed",
            "--out",
            &out,
        ],
        vec![
            "train-answerability",
            "--data",
            &data,
            "--features",
            "cvec",
            "--out",
            &out,
        ],
        vec!["eval-answerability", "--model", "/no/such.ckpt", "--data", &data],
        vec!["ingest", "--data", &data, "--out", &out, "--threads", "0"],
    ];
    for args in cases {
        let o = aqa(&args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty(), "{args:?} printed no error");
    }
}

#[test]
fn corrupt_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let o = aqa(&[
        "eval-answerability",
        "--model",
        ckpt.to_str().unwrap(),
        "--data",
        &fixture("tiny.jsonl"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_and_ingest_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ingested = dir.path().join("ingested.jsonl");
    let o = aqa(&[
        "ingest",
        "--data",
        &fixture("tiny.jsonl"),
        "--lang",
        "fi",
        "--out",
        ingested.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let lines = std::fs::read_to_string(&ingested).unwrap();
    assert!(lines.lines().count() > 0);
    assert!(lines.lines().all(|l| l.contains("\"fi\"") || l.contains("finnish")));

    let o = aqa(&["stats", "--data", &fixture("tiny.jsonl")]);
    assert!(o.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(stats.is_object() || stats.is_array());
}

#[test]
fn crosslingual_without_a_model_reports_every_language() {
    let o = aqa(&[
        "crosslingual",
        "--data",
        &fixture("tiny.jsonl"),
        "--train-lang",
        "en",
        "--n",
        "4",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    for lang in ["en", "fi", "ja"] {
        assert!(text.contains(&format!("\"{lang}\"")), "{lang} missing from {text}");
    }
}
