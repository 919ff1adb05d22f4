//! Evaluation metrics and reports.

mod crosslingual;
mod pr;
mod squad;
mod tokens;

pub use crosslingual::{
    crosslingual_report, draw_sample_indices, CrossLingualReport, CrossLingualRow, EvalSet, QaSystem, RandomGuess,
};
pub use pr::{pr_curve, write_pr_csv, PrCurve, PrPoint};
pub use squad::{mean_squad, normalize_answer, squad_v2, SquadScore};
pub use tokens::{confusion, token_f1, token_f1_from_confusion, ConfusionMatrix3, LabelF1, TokenF1};

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no positive gold labels")]
    NoPositives,
    #[error("invalid negative log-likelihood: {0}")]
    InvalidNll(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    System(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Fraction of positions where `preds` equals `golds`.
pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `exp(mean(nll))`.
pub fn perplexity(nll: &[f64]) -> Result<f64, EvalError> {
    if nll.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(bad) = nll.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(EvalError::InvalidNll(bad.to_string()));
    }
    Ok((nll.iter().sum::<f64>() / nll.len() as f64).exp())
}

/// One row of an exported NLL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllRecord {
    pub id: String,
    /// `questions` or `documents`.
    pub target: String,
    pub nlls: Vec<f64>,
}

pub fn read_nll_jsonl(reader: impl BufRead) -> Result<Vec<NllRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EvalError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Perplexity per target over all tokens of that target's records.
pub fn perplexity_by_target(records: &[NllRecord]) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        pooled.entry(r.target.clone()).or_default().extend(&r.nlls);
    }
    pooled.into_iter().map(|(t, v)| Ok((t, perplexity(&v)?))).collect()
}
