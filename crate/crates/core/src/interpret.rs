//! Integrated Gradients over the answerability classifier and the
//! punctuation-substitution attack.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answerability::{AnswerabilityError, AnswerabilityModel};
use crate::corpus::QaSample;
use crate::features::{feature_name, FeatureBlock, FeatureError, Featurize, Vocabulary};

pub const DEFAULT_STEPS: usize = 256;
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("input has {got} entries, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("integration needs at least one step")]
    NoSteps,
    #[error("class `{0}` has no attributions")]
    EmptyClass(String),
    #[error("sample `{id}` is not predicted answerable (confidence {confidence:.4})")]
    NotAnswerable { id: String, confidence: f64 },
    #[error("invalid substitution mapping: {0}")]
    Mapping(String),
    #[error(transparent)]
    Model(#[from] AnswerabilityError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A differentiable scalar function of a feature vector.
pub trait ScalarModel: Sync {
    fn input_dim(&self) -> usize;

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), InterpretError>;

    fn value(&self, x: &[f64]) -> Result<f64, InterpretError> {
        Ok(self.value_and_grad(x)?.0)
    }
}

/// The classifier's answerable-class probability.
impl ScalarModel for AnswerabilityModel {
    fn input_dim(&self) -> usize {
        AnswerabilityModel::input_dim(self)
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), InterpretError> {
        Ok(self.proba_and_input_grad(x)?)
    }

    fn value(&self, x: &[f64]) -> Result<f64, InterpretError> {
        Ok(self.predict_proba(x)?)
    }
}

/// `w . x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl ScalarModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), InterpretError> {
        check_dim(self.weights.len(), x.len())?;
        let v = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept;
        Ok((v, self.weights.clone()))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), InterpretError> {
    if expected != got {
        return Err(InterpretError::DimMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub id: String,
    pub values: Vec<f64>,
    pub output: f64,
    pub baseline_output: f64,
    /// `|sum(values) - (output - baseline_output)|`.
    pub completeness_gap: f64,
}

/// Right-endpoint Riemann approximation of Integrated Gradients with `m`
/// points `b + (k/m)(x - b)`, `k = 1..=m`.
pub fn integrated_gradients(
    model: &dyn ScalarModel,
    id: &str,
    x: &[f64],
    baseline: &[f64],
    m: usize,
) -> Result<Attribution, InterpretError> {
    check_dim(model.input_dim(), x.len())?;
    check_dim(x.len(), baseline.len())?;
    if m == 0 {
        return Err(InterpretError::NoSteps);
    }
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut grad_sum = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    for k in 1..=m {
        let alpha = k as f64 / m as f64;
        for ((p, b), d) in point.iter_mut().zip(baseline).zip(&delta) {
            *p = b + alpha * d;
        }
        let (_, g) = model.value_and_grad(&point)?;
        grad_sum.iter_mut().zip(&g).for_each(|(s, g)| *s += g);
    }
    let values: Vec<f64> = grad_sum.iter().zip(&delta).map(|(g, d)| d * g / m as f64).collect();
    let output = model.value(x)?;
    let baseline_output = model.value(baseline)?;
    let completeness_gap = (values.iter().sum::<f64>() - (output - baseline_output)).abs();
    Ok(Attribution {
        id: id.to_string(),
        values,
        output,
        baseline_output,
        completeness_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSalience {
    pub class: String,
    pub n: usize,
    pub features: Vec<NamedValue>,
}

/// Indices of `values` sorted by descending value, ties by index.
fn ranked(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Top `top_n` features per class by mean attribution.
pub fn salient_features(
    per_class: &[(String, Vec<Attribution>)],
    schema: &[FeatureBlock],
    vocab: Option<&Vocabulary>,
    top_n: usize,
) -> Result<Vec<ClassSalience>, InterpretError> {
    per_class
        .iter()
        .map(|(class, attrs)| {
            let first = attrs.first().ok_or_else(|| InterpretError::EmptyClass(class.clone()))?;
            let dim = first.values.len();
            let mut mean = vec![0.0; dim];
            for a in attrs {
                check_dim(dim, a.values.len())?;
                mean.iter_mut().zip(&a.values).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= attrs.len() as f64);
            let features = ranked(&mean)
                .into_iter()
                .take(top_n)
                .map(|i| NamedValue {
                    name: feature_name(schema, i, vocab),
                    index: i,
                    value: mean[i],
                })
                .collect();
            Ok(ClassSalience {
                class: class.clone(),
                n: attrs.len(),
                features,
            })
        })
        .collect()
}

/// One line of the attribution dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub class: String,
    pub completeness_gap: f64,
    pub top_features: Vec<NamedValue>,
}

impl AttributionRecord {
    pub fn new(
        attribution: &Attribution,
        class: &str,
        schema: &[FeatureBlock],
        vocab: Option<&Vocabulary>,
        top_n: usize,
    ) -> Self {
        let top_features = ranked(&attribution.values)
            .into_iter()
            .take(top_n)
            .map(|i| NamedValue {
                name: feature_name(schema, i, vocab),
                index: i,
                value: attribution.values[i],
            })
            .collect();
        Self {
            id: attribution.id.clone(),
            class: class.to_string(),
            completeness_gap: attribution.completeness_gap,
            top_features,
        }
    }
}

/// Character substitutions applied to question and context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionMap(pub BTreeMap<char, String>);

impl Default for SubstitutionMap {
    /// `.` to `?` and `,` to `-`.
    fn default() -> Self {
        Self(BTreeMap::from([('.', "?".to_string()), (',', "-".to_string())]))
    }
}

impl SubstitutionMap {
    pub fn identity() -> Self {
        Self(BTreeMap::new())
    }

    /// Parses pairs like `.?` (replace `.` by `?`); the first character is
    /// the key, the rest the replacement.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[S]) -> Result<Self, InterpretError> {
        let mut map = BTreeMap::new();
        for p in pairs {
            let mut chars = p.as_ref().chars();
            let key = chars
                .next()
                .ok_or_else(|| InterpretError::Mapping("empty pair".into()))?;
            map.insert(key, chars.collect());
        }
        Ok(Self(map))
    }
}

pub fn adversarial_substitute(text: &str, mapping: &SubstitutionMap) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match mapping.0.get(&c) {
            Some(r) => out.push_str(r),
            None => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub n: usize,
    pub flip_count: usize,
    pub ids: Vec<String>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub mapping: SubstitutionMap,
    pub applied_to: String,
}

/// Perturbs question and context of every sample, re-featurizes and
/// re-predicts. Every sample must start out predicted answerable.
pub fn attack_report<F: Featurize + Sync>(
    model: &dyn ScalarModel,
    featurizer: &F,
    samples: &[QaSample],
    mapping: &SubstitutionMap,
) -> Result<AttackReport, InterpretError> {
    let pairs = samples
        .par_iter()
        .map(|s| {
            let before = model.value(featurizer.featurize_sample(s)?.values())?;
            if before < 0.5 {
                return Err(InterpretError::NotAnswerable {
                    id: s.id.clone(),
                    confidence: before,
                });
            }
            let q = adversarial_substitute(&s.question_text, mapping);
            let c = adversarial_substitute(&s.context_text, mapping);
            let after = model.value(featurizer.featurize(&s.id, &q, &c, s.language)?.values())?;
            Ok((before, after))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (before, after): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(AttackReport {
        n: samples.len(),
        flip_count: after.iter().filter(|&&a| a < 0.5).count(),
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        before,
        after,
        mapping: mapping.clone(),
        applied_to: "question+context".into(),
    })
}

/// Confidence histogram over `[0, 1]` in `bins` equal bins, as CSV with
/// columns `bin_start,bin_end,before,after`.
pub fn write_histogram_csv(mut out: impl Write, report: &AttackReport, bins: usize) -> std::io::Result<()> {
    let count = |values: &[f64]| {
        let mut h = vec![0usize; bins];
        for &v in values {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            h[b] += 1;
        }
        h
    };
    let (hb, ha) = (count(&report.before), count(&report.after));
    writeln!(out, "bin_start,bin_end,before,after")?;
    for b in 0..bins {
        writeln!(
            out,
            "{:.2},{:.2},{},{}",
            b as f64 / bins as f64,
            (b + 1) as f64 / bins as f64,
            hb[b],
            ha[b]
        )?;
    }
    out.flush()
}
