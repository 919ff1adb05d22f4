//! Feedforward answerability classifier: `in -> 256 -> 64 -> 1` with ReLU,
//! dropout after each hidden layer and a single sigmoid logit.

use std::collections::BTreeMap;

use log::{debug, info};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{
    adam_step, bce_with_logits, dropout, seeded_rng, sigmoid, AdamConfig, AdamState, Checkpoint, Dense, Mode,
    NeuralError, Parameters, SeededRng,
};

pub const ARCHITECTURE: &str = "answerability-ffn";
pub const DEFAULT_HIDDEN: (usize, usize) = (256, 64);
pub const DEFAULT_DROPOUT: f64 = 0.25;
/// Smallest validation-accuracy gain that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AnswerabilityError {
    #[error("input dimension must be at least 1")]
    EmptyInput,
    #[error("feature vector has {got} entries, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerabilityModel {
    pub layer1: Dense,
    pub layer2: Dense,
    pub layer3: Dense,
    pub dropout: f64,
}

impl Parameters for AnswerabilityModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (prefix, layer) in [
            ("layer1", &self.layer1),
            ("layer2", &self.layer2),
            ("layer3", &self.layer3),
        ] {
            for (name, t) in layer.tensors() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = self.layer1.tensors_mut();
        out.extend(self.layer2.tensors_mut());
        out.extend(self.layer3.tensors_mut());
        out
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    mask1: Array2<f64>,
    mask2: Array2<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn relu_grad(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Glorot-initialized classifier, seeded.
pub fn build_classifier(
    input_dim: usize,
    hidden: (usize, usize),
    dropout: f64,
    seed: u64,
) -> Result<AnswerabilityModel, AnswerabilityError> {
    if input_dim == 0 {
        return Err(AnswerabilityError::EmptyInput);
    }
    if hidden.0 == 0 || hidden.1 == 0 {
        return Err(AnswerabilityError::Config("hidden widths must be positive".into()));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(AnswerabilityError::Config(format!("dropout {dropout} outside [0, 1)")));
    }
    let mut rng = seeded_rng(seed);
    Ok(AnswerabilityModel {
        layer1: Dense::glorot(input_dim, hidden.0, &mut rng),
        layer2: Dense::glorot(hidden.0, hidden.1, &mut rng),
        layer3: Dense::glorot(hidden.1, 1, &mut rng),
        dropout,
    })
}

impl AnswerabilityModel {
    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.layer1.output_dim(), self.layer2.output_dim())
    }

    fn check_dim(&self, got: usize) -> Result<(), AnswerabilityError> {
        if got != self.input_dim() {
            return Err(AnswerabilityError::DimMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Logits for a batch (N x input_dim) and the cache for [`Self::backward`].
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(Array1<f64>, ForwardCache), AnswerabilityError> {
        self.check_dim(x.ncols())?;
        let z1 = self.layer1.forward(x)?;
        let (h1, mask1) = dropout(&relu(&z1), self.dropout, mode, rng)?;
        let z2 = self.layer2.forward(h1.view())?;
        let (h2, mask2) = dropout(&relu(&z2), self.dropout, mode, rng)?;
        let logits = self.layer3.forward(h2.view())?.column(0).to_owned();
        let cache = ForwardCache {
            x: x.to_owned(),
            z1,
            h1,
            z2,
            h2,
            mask1,
            mask2,
        };
        Ok((logits, cache))
    }

    /// Parameter gradients and the input gradient for upstream `d_logits`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: ArrayView1<f64>,
    ) -> Result<(AnswerabilityModel, Array2<f64>), AnswerabilityError> {
        let dy = d_logits.to_owned().insert_axis(Axis(1));
        let (dh2, g3) = self.layer3.backward(cache.h2.view(), dy.view())?;
        let dz2 = dh2 * &cache.mask2 * relu_grad(&cache.z2);
        let (dh1, g2) = self.layer2.backward(cache.h1.view(), dz2.view())?;
        let dz1 = dh1 * &cache.mask1 * relu_grad(&cache.z1);
        let (dx, g1) = self.layer1.backward(cache.x.view(), dz1.view())?;
        let grads = AnswerabilityModel {
            layer1: g1,
            layer2: g2,
            layer3: g3,
            dropout: self.dropout,
        };
        Ok((grads, dx))
    }

    /// Eval-mode probability of the answerable class.
    pub fn predict_proba(&self, features: &[f64]) -> Result<f64, AnswerabilityError> {
        let x = ArrayView2::from_shape((1, features.len()), features).map_err(|e| NeuralError::Shape(e.to_string()))?;
        Ok(self.predict_batch(x)?[0])
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, AnswerabilityError> {
        let (logits, _) = self.forward(x, Mode::Eval, &mut seeded_rng(0))?;
        Ok(logits.mapv(sigmoid))
    }

    /// Eval-mode probability and its gradient with respect to the input.
    pub fn proba_and_input_grad(&self, features: &[f64]) -> Result<(f64, Vec<f64>), AnswerabilityError> {
        let x = ArrayView2::from_shape((1, features.len()), features).map_err(|e| NeuralError::Shape(e.to_string()))?;
        let (logits, cache) = self.forward(x, Mode::Eval, &mut seeded_rng(0))?;
        let p = sigmoid(logits[0]);
        let (_, dx) = self.backward(&cache, Array1::from_elem(1, p * (1.0 - p)).view())?;
        Ok((p, dx.row(0).to_vec()))
    }

    pub fn to_checkpoint(&self, seed: u64, config: serde_json::Value) -> Checkpoint {
        let (h1, h2) = self.hidden();
        let dims = BTreeMap::from([
            ("input".to_string(), self.input_dim()),
            ("hidden1".to_string(), h1),
            ("hidden2".to_string(), h2),
        ]);
        let mut config = config;
        if let Some(map) = config.as_object_mut() {
            map.insert("dropout".into(), self.dropout.into());
        }
        Checkpoint::from_params(ARCHITECTURE, dims, seed, config, self)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, AnswerabilityError> {
        if ckpt.meta.architecture != ARCHITECTURE {
            return Err(NeuralError::Checkpoint(format!(
                "expected a {ARCHITECTURE} checkpoint, found {}",
                ckpt.meta.architecture
            ))
            .into());
        }
        let dropout = ckpt
            .meta
            .config
            .get("dropout")
            .and_then(|v| v.as_f64())
            .unwrap_or(DEFAULT_DROPOUT);
        let mut model = AnswerabilityModel {
            layer1: Dense::zeros(ckpt.dim("input")?, ckpt.dim("hidden1")?),
            layer2: Dense::zeros(ckpt.dim("hidden1")?, ckpt.dim("hidden2")?),
            layer3: Dense::zeros(ckpt.dim("hidden2")?, 1),
            dropout,
        };
        ckpt.load_into(&mut model)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Answerable,
    Unanswerable,
}

/// Answerable iff `proba >= threshold`.
pub fn classify(proba: f64, threshold: f64) -> Verdict {
    if proba >= threshold {
        Verdict::Answerable
    } else {
        Verdict::Unanswerable
    }
}

/// Feature rows with binary answerability labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: Array2<f64>,
    pub y: Vec<bool>,
}

impl LabeledData {
    pub fn new(x: Array2<f64>, y: Vec<bool>) -> Result<Self, AnswerabilityError> {
        if x.nrows() != y.len() {
            return Err(AnswerabilityError::LabelCount {
                features: x.nrows(),
                labels: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<bool>) -> Result<Self, AnswerabilityError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(AnswerabilityError::DimMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| NeuralError::Shape(e.to_string()))?;
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Seeded shuffle, then the first `train_fraction` of rows for training.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Self, Self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded_rng(seed));
        let cut = ((self.len() as f64 * train_fraction).round() as usize).min(self.len());
        (self.select(&order[..cut]), self.select(&order[cut..]))
    }
}

pub fn accuracy_of(model: &AnswerabilityModel, data: &LabeledData) -> Result<f64, AnswerabilityError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let probs = model.predict_batch(data.x.view())?;
    let correct = probs
        .iter()
        .zip(&data.y)
        .filter(|(p, &y)| (classify(**p, 0.5) == Verdict::Answerable) == y)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            lr: 1e-3,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AnswerabilityError> {
        if self.batch_size == 0 {
            return Err(AnswerabilityError::Config("batch_size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(AnswerabilityError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(AnswerabilityError::Config(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mini-batch Adam on binary cross-entropy with early stopping on validation
/// accuracy. Returns the parameters of the best epoch.
pub fn train_classifier(
    model: AnswerabilityModel,
    train: &LabeledData,
    val: &LabeledData,
    cfg: &TrainConfig,
) -> Result<(AnswerabilityModel, TrainHistory), AnswerabilityError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(AnswerabilityError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(AnswerabilityError::EmptySplit("validation"));
    }
    model.check_dim(train.x.ncols())?;
    model.check_dim(val.x.ncols())?;

    let mut rng = seeded_rng(cfg.seed);
    let mut model = model;
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let x = train.x.select(Axis(0), rows);
            let y: Array1<f64> = rows.iter().map(|&i| if train.y[i] { 1.0 } else { 0.0 }).collect();
            let (logits, cache) = model.forward(x.view(), Mode::Train, &mut rng)?;
            let (loss, d_logits) = bce_with_logits(&logits, &y)?;
            if !loss.is_finite() {
                return Err(AnswerabilityError::NonFiniteLoss { epoch, batch });
            }
            loss_sum += loss * rows.len() as f64;
            let (grads, _) = model.backward(&cache, d_logits.view())?;
            adam_step(&mut model, &grads, &mut state, &cfg.adam, cfg.lr)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_accuracy = accuracy_of(&model, val)?;
        debug!("epoch {epoch}: train_loss {train_loss:.6} val_accuracy {val_accuracy:.4}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best_epoch = epoch;
            best = model.clone();
        }
        if val_accuracy > reference + IMPROVEMENT_EPS {
            reference = val_accuracy;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience && epoch < cfg.max_epochs {
                stopped_early = true;
                break;
            }
        }
    }
    info!(
        "trained {} epochs, best epoch {best_epoch} with val accuracy {best_acc:.4}",
        epochs.len()
    );
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            stopped_early,
        },
    ))
}
