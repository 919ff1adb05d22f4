//! End-to-end determinism of the `aqa` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use crate::criteria::fixtures;
use crate::{ensure, Verdict};

/// One invocation: arguments with `{fx}` for the fixture directory and
/// `{out}` for the run's output directory.
const STEPS: &[&str] = &[
    "ingest --data {fx}/tiny.jsonl --out {out}/ingested.jsonl",
    "stats --data {fx}/tiny.jsonl --split train --out {out}/stats.json",
    "train-answerability --data {fx}/tiny.jsonl --features combo --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --bow-size 200 --epochs 4 --patience 2 --batch-size 8 --out {out}/clf.ckpt",
    "eval-answerability --model {out}/clf.ckpt --data {fx}/tiny.jsonl --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --out {out}/proba.jsonl",
    "pr-curve --model {out}/clf.ckpt --data {fx}/tiny.jsonl --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --out {out}/pr.csv",
    "train-tagger --data {fx}/tiny.jsonl --cvec {fx}/tiny.cvec --hidden 8 --epochs 2 --batch-size 4 --val-fraction 0.2 --out {out}/tagger.ckpt",
    "eval-tagger --model {out}/tagger.ckpt --data {fx}/tiny.jsonl --cvec {fx}/tiny.cvec --beam-k 3 --constraints a,b,c",
    "predict --model {out}/tagger.ckpt --data {fx}/tiny.jsonl --cvec {fx}/tiny.cvec --beam-k 2 --out {out}/predictions.jsonl",
    "ig --model {out}/clf.ckpt --data {fx}/tiny.jsonl --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --steps 32 --out {out}/ig.jsonl",
    "attack --model {out}/clf.ckpt --data {fx}/tiny.jsonl --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --out {out}/attack.json --histogram {out}/attack.csv",
    "crosslingual --data {fx}/tiny.jsonl --train-lang en --n 5 --model {out}/clf.ckpt --bpe-vocab {fx}/bpe.vocab --bpe-merges {fx}/bpe.merges --bpe-emb {fx}/bpe.emb --tagger {out}/tagger.ckpt --cvec {fx}/tiny.cvec --format json",
];

/// Runs every step into `out`, returning the concatenated stdout.
fn run_all(out: &Path, threads: Option<&str>) -> Result<Vec<u8>, String> {
    let fx = fixtures();
    let mut stdout = Vec::new();
    for step in STEPS {
        let line = step
            .replace("{fx}", &fx.display().to_string())
            .replace("{out}", &out.display().to_string());
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_aqa"));
        cmd.args(line.split_whitespace()).args(["--seed", "7"]);
        if let Some(n) = threads {
            cmd.args(["--threads", n]);
        }
        let result = cmd.output().map_err(|e| e.to_string())?;
        ensure(
            result.status.success(),
            format!(
                "`aqa {}` exited with {}: {}",
                step.split_whitespace().next().unwrap_or(""),
                result.status,
                String::from_utf8_lossy(&result.stderr).trim()
            ),
        )?;
        stdout.extend_from_slice(&result.stdout);
    }
    Ok(stdout)
}

fn files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| e.to_string())?;
        out.push((entry.file_name().to_string_lossy().into_owned(), bytes));
    }
    out.sort();
    Ok(out)
}

pub fn reproducibility() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_a = run_all(a.path(), None)?;
    let out_b = run_all(b.path(), Some("2"))?;
    ensure(out_a == out_b, "stdout differs between runs")?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    ensure(
        fa.iter().map(|f| &f.0).eq(fb.iter().map(|f| &f.0)),
        "runs wrote different file sets",
    )?;
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        ensure(x == y, format!("{name} differs between runs"))?;
    }
    let ckpt = fa
        .iter()
        .find(|f| f.0 == "clf.ckpt")
        .ok_or("no classifier checkpoint")?;
    ensure(!ckpt.1.is_empty(), "empty classifier checkpoint")?;
    Ok(format!(
        "{} subcommands, {} output files and stdout byte-identical across two runs (default and 2 threads), seed 7",
        STEPS.len(),
        fa.len()
    ))
}
