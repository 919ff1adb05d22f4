use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Points in ascending threshold order; a sample counts as predicted
/// positive when its score is at least the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

/// One point per distinct score. Average precision is
/// `sum_n (R_n - R_{n-1}) * P_n` over thresholds in descending order.
pub fn pr_curve(scores: &[f64], golds: &[bool]) -> Result<PrCurve, EvalError> {
    check_lengths(scores.len(), golds.len())?;
    let positives = golds.iter().filter(|&&g| g).count();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if golds[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold,
            precision,
            recall,
        });
    }
    points.reverse();
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}

/// `threshold,precision,recall` with a header row.
pub fn write_pr_csv(mut out: impl Write, curve: &PrCurve) -> std::io::Result<()> {
    writeln!(out, "threshold,precision,recall")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall)?;
    }
    out.flush()
}
