use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};
use crate::labels::IobLabel;

/// Counts indexed `[gold][predicted]` in `O, B, I` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, gold: IobLabel, predicted: IobLabel) -> usize {
        self.counts[gold.index()][predicted.index()]
    }
}

pub fn confusion(gold: &[IobLabel], predicted: &[IobLabel]) -> Result<ConfusionMatrix3, EvalError> {
    check_lengths(gold.len(), predicted.len())?;
    let mut m = ConfusionMatrix3::default();
    for (g, p) in gold.iter().zip(predicted) {
        m.counts[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelF1 {
    pub label: IobLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the label occurs in neither gold nor prediction.
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenF1 {
    pub per_label: Vec<LabelF1>,
    /// Mean F1 over included labels; 0 when none is included.
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix3,
}

pub fn token_f1_from_confusion(m: &ConfusionMatrix3) -> TokenF1 {
    let mut per_label = Vec::with_capacity(3);
    for label in IobLabel::ALL {
        let j = label.index();
        let tp = m.counts[j][j] as f64;
        let gold: usize = m.counts[j].iter().sum();
        let pred: usize = m.counts.iter().map(|row| row[j]).sum();
        let precision = if pred == 0 { 0.0 } else { tp / pred as f64 };
        let recall = if gold == 0 { 0.0 } else { tp / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_label.push(LabelF1 {
            label,
            precision,
            recall,
            f1,
            included: gold + pred > 0,
        });
    }
    let included: Vec<f64> = per_label.iter().filter(|l| l.included).map(|l| l.f1).collect();
    let macro_f1 = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    TokenF1 {
        per_label,
        macro_f1,
        confusion: m.clone(),
    }
}

/// Per-label and macro F1 over aligned label sequences.
pub fn token_f1(gold: &[IobLabel], predicted: &[IobLabel]) -> Result<TokenF1, EvalError> {
    Ok(token_f1_from_confusion(&confusion(gold, predicted)?))
}
