use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_squad, squad_v2, EvalError};
use crate::corpus::QaSample;
use crate::neural::{seeded_rng, SeededRng};
use crate::tokenization::Language;

/// Answerability and span extraction behind one interface.
pub trait QaSystem: Sync {
    /// Probability that `sample` is answerable.
    fn answerable_proba(&self, sample: &QaSample) -> Result<f64, EvalError>;

    /// Extracted answer text, `None` for "unanswerable".
    fn extract(&self, sample: &QaSample) -> Result<Option<String>, EvalError>;
}

/// Coin-flip answerability and no extraction. Each sample's draw depends
/// only on the seed and the sample id.
#[derive(Debug, Clone, Copy)]
pub struct RandomGuess {
    pub seed: u64,
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl QaSystem for RandomGuess {
    fn answerable_proba(&self, sample: &QaSample) -> Result<f64, EvalError> {
        let mut rng = SeededRng::seed_from_u64(self.seed ^ fnv1a(&sample.id));
        Ok(rng.random::<f64>())
    }

    fn extract(&self, _sample: &QaSample) -> Result<Option<String>, EvalError> {
        Ok(None)
    }
}

/// Sorted indices of `n` distinct samples out of `len`. When `n` exceeds
/// `len` every index is returned.
pub fn draw_sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    if n >= len {
        if n > len {
            warn!("requested {n} samples but only {len} available, using all");
        }
        return (0..len).collect();
    }
    let mut idx = rand::seq::index::sample(&mut seeded_rng(seed), len, n).into_vec();
    idx.sort_unstable();
    idx
}

pub struct EvalSet<'a> {
    pub language: Language,
    pub samples: &'a [QaSample],
    pub system: &'a dyn QaSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLingualRow {
    pub language: Language,
    pub n: usize,
    pub accuracy: f64,
    pub squad_f1: f64,
    pub squad_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLingualReport {
    pub train_language: Language,
    pub seed: u64,
    pub requested_n: usize,
    pub rows: Vec<CrossLingualRow>,
}

impl CrossLingualReport {
    /// Aligned plain-text table, percentages with one decimal.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "trained on: {}   seed: {}", self.train_language.code(), self.seed);
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:>12} {:>8} {:>8}",
            "lang", "n", "accuracy[%]", "F1[%]", "EM[%]"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:>5} {:>12.1} {:>8.1} {:>8.1}",
                r.language.code(),
                r.n,
                100.0 * r.accuracy,
                100.0 * r.squad_f1,
                100.0 * r.squad_exact
            );
        }
        out
    }
}

/// For each evaluation set, draws `n` samples with the seeded sampler and
/// scores answerability accuracy at threshold 0.5 and SQuAD v2 extraction.
pub fn crosslingual_report(
    train_language: Language,
    sets: &[EvalSet<'_>],
    n: usize,
    seed: u64,
) -> Result<CrossLingualReport, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::MissingArtifact("no evaluation languages".into()));
    }
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        if set.samples.is_empty() {
            return Err(EvalError::MissingArtifact(format!(
                "no {} samples",
                set.language.code()
            )));
        }
        let picked = draw_sample_indices(set.samples.len(), n, seed);
        let scored = picked
            .par_iter()
            .map(|&i| {
                let s = &set.samples[i];
                let proba = set.system.answerable_proba(s)?;
                let extracted = set.system.extract(s)?;
                let gold = s.answer.as_ref().map(|a| a.text.as_str());
                let correct = (proba >= 0.5) == s.is_answerable();
                Ok((correct, squad_v2(extracted.as_deref(), gold, set.language)))
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let accuracy = scored.iter().filter(|(c, _)| *c).count() as f64 / scored.len() as f64;
        let squad = mean_squad(&scored.iter().map(|(_, s)| *s).collect::<Vec<_>>());
        rows.push(CrossLingualRow {
            language: set.language,
            n: scored.len(),
            accuracy,
            squad_f1: squad.f1,
            squad_exact: squad.exact,
        });
    }
    Ok(CrossLingualReport {
        train_language,
        seed,
        requested_n: n,
        rows,
    })
}
