use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::TaggerError;
use crate::labels::IobLabel;

/// Independently switchable IOB legality rules. All off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalityConfig {
    /// (a) no `I` at the first position.
    pub no_initial_i: bool,
    /// (b) no `I` directly after `O`.
    pub no_i_after_o: bool,
    /// (c) at most one `B` per sequence.
    pub single_b: bool,
}

impl LegalityConfig {
    pub fn all() -> Self {
        Self {
            no_initial_i: true,
            no_i_after_o: true,
            single_b: true,
        }
    }

    pub fn any(&self) -> bool {
        self.no_initial_i || self.no_i_after_o || self.single_b
    }

    /// Whether `next` may follow `prev` (`None` at the start) given
    /// whether a `B` has already been emitted.
    fn allows(&self, prev: Option<IobLabel>, seen_b: bool, next: IobLabel) -> bool {
        match next {
            IobLabel::I => !(self.no_initial_i && prev.is_none() || self.no_i_after_o && prev == Some(IobLabel::O)),
            IobLabel::B => !(self.single_b && seen_b),
            IobLabel::O => true,
        }
    }
}

impl fmt::Display for LegalityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.no_initial_i, "a"), (self.no_i_after_o, "b"), (self.single_b, "c")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for LegalityConfig {
    type Err = TaggerError;

    /// Comma-separated subset of `a,b,c`; empty or `none` disables all.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "a" => cfg.no_initial_i = true,
                "b" => cfg.no_i_after_o = true,
                "c" => cfg.single_b = true,
                other => return Err(TaggerError::Config(format!("unknown constraint `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

pub fn is_legal(labels: &[IobLabel], cfg: &LegalityConfig) -> bool {
    let mut prev = None;
    let mut seen_b = false;
    for &l in labels {
        if !cfg.allows(prev, seen_b, l) {
            return false;
        }
        seen_b |= l == IobLabel::B;
        prev = Some(l);
    }
    true
}

pub fn sequence_score(logprobs: ArrayView2<f64>, labels: &[IobLabel]) -> f64 {
    labels.iter().enumerate().map(|(t, l)| logprobs[[t, l.index()]]).sum()
}

#[derive(Debug, Clone)]
struct Hypothesis {
    labels: Vec<IobLabel>,
    score: f64,
    seen_b: bool,
}

/// Higher score first; equal scores fall back to label order at the first
/// position where the sequences differ.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels))
}

/// Beam search over per-token label log-probabilities (T x 3). `k = 1` is
/// greedy. Sequences violating an enabled rule are never kept. Partial
/// sequences that share their last label and whether a `B` was emitted have
/// identical legal continuations, so only the best of them occupies a slot.
pub fn decode(logprobs: ArrayView2<f64>, k: usize, cfg: &LegalityConfig) -> Result<Vec<IobLabel>, TaggerError> {
    if k == 0 {
        return Err(TaggerError::Config("beam width must be at least 1".into()));
    }
    if logprobs.ncols() != IobLabel::COUNT {
        return Err(TaggerError::Config(format!(
            "expected {} label columns, got {}",
            IobLabel::COUNT,
            logprobs.ncols()
        )));
    }
    let t_len = logprobs.nrows();
    let mut beam = vec![Hypothesis {
        labels: Vec::with_capacity(t_len),
        score: 0.0,
        seen_b: false,
    }];
    for t in 0..t_len {
        let mut next = Vec::with_capacity(beam.len() * IobLabel::COUNT);
        for hyp in &beam {
            let prev = hyp.labels.last().copied();
            for label in IobLabel::ALL {
                if !cfg.allows(prev, hyp.seen_b, label) {
                    continue;
                }
                let mut labels = hyp.labels.clone();
                labels.push(label);
                next.push(Hypothesis {
                    labels,
                    score: hyp.score + logprobs[[t, label.index()]],
                    seen_b: hyp.seen_b || label == IobLabel::B,
                });
            }
        }
        next.sort_by(rank);
        let mut states = Vec::with_capacity(next.len());
        next.retain(|h| {
            let state = (h.labels.last().copied(), h.seen_b);
            let fresh = !states.contains(&state);
            if fresh {
                states.push(state);
            }
            fresh
        });
        next.truncate(k);
        beam = next;
    }
    Ok(beam.swap_remove(0).labels)
}

/// Best legal sequence by enumerating all 3^T candidates, with the same
/// tie-breaking as [`decode`]. Only practical for short inputs.
pub fn exhaustive_best(logprobs: ArrayView2<f64>, cfg: &LegalityConfig) -> Option<(Vec<IobLabel>, f64)> {
    let t_len = logprobs.nrows();
    let total = 3usize.checked_pow(t_len as u32)?;
    let mut best: Option<(Vec<IobLabel>, f64)> = None;
    for code in 0..total {
        let mut c = code;
        let mut labels = vec![IobLabel::O; t_len];
        for slot in labels.iter_mut().rev() {
            *slot = IobLabel::ALL[c % 3];
            c /= 3;
        }
        if !is_legal(&labels, cfg) {
            continue;
        }
        let score = sequence_score(logprobs, &labels);
        // codes ascend lexicographically, so a strict improvement is required
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((labels, score));
        }
    }
    best
}
