use std::collections::HashMap;

use log::{debug, info, warn};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decode, tokens_from_offsets, LegalityConfig, TaggerError, TaggerModel};
use crate::corpus::{derive_gold_iob, CorpusError, QaSample};
use crate::evaluate::token_f1;
use crate::features::ContextVectorSet;
use crate::labels::IobLabel;
use crate::neural::{
    adam_step, seeded_rng, weighted_cross_entropy, AdamConfig, AdamState, LrSchedule, Mode, Parameters,
};

/// Cross-entropy weights for `O`, `B`, `I`.
pub const DEFAULT_CLASS_WEIGHTS: [f64; 3] = [0.01, 1.0, 1.0];

/// Examples whose gradients are summed sequentially inside one parallel task.
const GRAD_CHUNK: usize = 4;

/// One segment with its encoder vectors and gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerExample {
    pub id: String,
    pub segment: usize,
    pub pooled: Array1<f64>,
    pub tokens: Array2<f64>,
    pub gold: Vec<IobLabel>,
}

/// Pairs CVEC records with their samples and derives gold labels per
/// segment. Records of one id are segments in file order. An answerable
/// sample must have its answer inside at least one segment.
pub fn build_examples(samples: &[QaSample], sets: &[ContextVectorSet]) -> Result<Vec<TaggerExample>, TaggerError> {
    let by_id: HashMap<&str, &QaSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut next_segment: HashMap<&str, usize> = HashMap::new();
    let mut covered: HashMap<&str, bool> = HashMap::new();
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        let Some(sample) = by_id.get(set.sample_id.as_str()) else {
            warn!("no sample for context vectors `{}`, skipped", set.sample_id);
            continue;
        };
        let tokens = tokens_from_offsets(&sample.id, &sample.context_text, &set.token_offsets)?;
        let gold = match derive_gold_iob(sample, &tokens) {
            Ok(g) => g,
            Err(CorpusError::Labeling { .. }) => vec![IobLabel::O; tokens.len()],
            Err(e) => return Err(e.into()),
        };
        *covered.entry(sample.id.as_str()).or_default() |= gold.contains(&IobLabel::B);
        let seg = next_segment.entry(sample.id.as_str()).or_default();
        out.push(TaggerExample {
            id: sample.id.clone(),
            segment: *seg,
            pooled: set.pooled_f64(),
            tokens: set.token_vectors_f64(),
            gold,
        });
        *seg += 1;
    }
    for (id, has_b) in covered {
        if by_id[id].is_answerable() && !has_b {
            return Err(CorpusError::Labeling { id: id.to_string() }.into());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub class_weights: [f64; 3],
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TaggerTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr_start: 1e-3,
            lr_end: 1e-5,
            class_weights: DEFAULT_CLASS_WEIGHTS,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub val_macro_f1: Option<f64>,
    /// Share of validation segments predicted as `B, O, O, ...`.
    pub degenerate_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaggerHistory {
    pub epochs: Vec<EpochStats>,
}

/// Share of sequences of the form `B` followed only by `O`.
pub fn degenerate_fraction(predictions: &[Vec<IobLabel>]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let n = predictions
        .iter()
        .filter(|p| p.first() == Some(&IobLabel::B) && p[1..].iter().all(|&l| l == IobLabel::O))
        .count();
    n as f64 / predictions.len() as f64
}

/// Decodes every example and returns the macro token F1 over all tokens,
/// the degenerate fraction and the predictions.
pub fn evaluate_examples(
    model: &TaggerModel,
    examples: &[TaggerExample],
    k: usize,
    constraints: &LegalityConfig,
) -> Result<(f64, f64, Vec<Vec<IobLabel>>), TaggerError> {
    let predictions = examples
        .par_iter()
        .map(|ex| {
            let lp = model.log_probs(ex.pooled.view(), ex.tokens.view())?;
            decode(lp.view(), k, constraints)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gold: Vec<IobLabel> = examples.iter().flat_map(|e| e.gold.iter().copied()).collect();
    let pred: Vec<IobLabel> = predictions.iter().flatten().copied().collect();
    let f1 = token_f1(&gold, &pred)
        .map_err(|e| TaggerError::Config(e.to_string()))?
        .macro_f1;
    Ok((f1, degenerate_fraction(&predictions), predictions))
}

fn example_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed ^ ((epoch as u64) << 40) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Adam on class-weighted cross-entropy with a linearly decaying learning
/// rate. Gradients are averaged over each mini-batch; per-example work runs
/// in parallel and is reduced in a fixed order, so results depend only on
/// the seed.
pub fn train_tagger(
    model: TaggerModel,
    train: &[TaggerExample],
    val: &[TaggerExample],
    cfg: &TaggerTrainConfig,
) -> Result<(TaggerModel, TaggerHistory), TaggerError> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(TaggerError::Config("epochs and batch_size must be positive".into()));
    }
    let usable: Vec<usize> = (0..train.len()).filter(|&i| !train[i].gold.is_empty()).collect();
    if usable.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }
    for ex in train.iter().chain(val) {
        if ex.gold.len() != ex.tokens.nrows() {
            return Err(TaggerError::Misaligned {
                labels: ex.gold.len(),
                tokens: ex.tokens.nrows(),
            });
        }
    }
    let batches_per_epoch = usable.len().div_ceil(cfg.batch_size);
    let schedule = LrSchedule::new(cfg.lr_start, cfg.lr_end, (cfg.epochs * batches_per_epoch) as u64)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut model = model;
    let mut state = AdamState::new(&model);
    let mut order = usable;
    let mut history = TaggerHistory::default();
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr_start;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let partials = rows
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut acc = model.zeros_like();
                    let mut loss = 0.0;
                    for &i in chunk {
                        let ex = &train[i];
                        let mut ex_rng = seeded_rng(example_seed(cfg.seed, epoch, i));
                        let (logits, cache) =
                            model.forward(ex.pooled.view(), ex.tokens.view(), Mode::Train, &mut ex_rng)?;
                        let targets: Vec<usize> = ex.gold.iter().map(|l| l.index()).collect();
                        let (l, dl) = weighted_cross_entropy(logits.view(), &targets, &cfg.class_weights)?;
                        let g = model.backward(&cache, dl.view())?;
                        acc.add_scaled(&g, 1.0);
                        loss += l;
                    }
                    Ok((acc, loss))
                })
                .collect::<Result<Vec<_>, TaggerError>>()?;
            let scale = 1.0 / rows.len() as f64;
            let mut grads = model.zeros_like();
            let mut batch_loss = 0.0;
            for (g, l) in &partials {
                grads.add_scaled(g, scale);
                batch_loss += l;
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(TaggerError::NonFiniteLoss { epoch, batch });
            }
            loss_sum += batch_loss;
            lr = schedule.lr_at(step)?;
            adam_step(&mut model, &grads, &mut state, &cfg.adam, lr)?;
            step += 1;
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_macro_f1, degenerate) = if val.is_empty() {
            (None, None)
        } else {
            let (f1, deg, _) = evaluate_examples(&model, val, 1, &LegalityConfig::default())?;
            (Some(f1), Some(deg))
        };
        debug!("epoch {epoch}: loss {train_loss:.6} lr {lr:.2e} val F1 {val_macro_f1:?} B,O,O.. share {degenerate:?}");
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            lr,
            val_macro_f1,
            degenerate_fraction: degenerate,
        });
    }
    if let Some(last) = history.epochs.last() {
        info!(
            "tagger trained for {} epochs, final val F1 {:?}",
            history.epochs.len(),
            last.val_macro_f1
        );
    }
    Ok((model, history))
}
