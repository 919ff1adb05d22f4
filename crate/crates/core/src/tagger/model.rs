use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaggerError;
use crate::labels::IobLabel;
use crate::neural::{
    log_softmax_rows, seeded_rng, BiLstm, BiLstmCache, Checkpoint, Dense, Mode, NeuralError, Parameters,
};

pub const ARCHITECTURE: &str = "bilstm-iob-tagger";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            hidden: 300,
            layers: 2,
            dropout: 0.1,
        }
    }
}

/// Bridge from the pooled encoder vector to the decoder's initial hidden
/// states, a bidirectional LSTM over token vectors, and a 3-way label head.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    /// D -> (2 * layers) * H, reshaped row-major to (2 * layers, H).
    pub bridge: Dense,
    pub decoder: BiLstm,
    /// 2H -> 3
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct TaggerCache {
    pooled: Array2<f64>,
    lstm: BiLstmCache,
    lstm_out: Array2<f64>,
}

impl Parameters for TaggerModel {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (name, t) in self.bridge.tensors() {
            out.push((format!("bridge.{name}"), t));
        }
        for (name, t) in self.decoder.tensors() {
            out.push((format!("decoder.{name}"), t));
        }
        for (name, t) in self.head.tensors() {
            out.push((format!("head.{name}"), t));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = self.bridge.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

impl TaggerModel {
    pub fn new(input_dim: usize, cfg: &TaggerConfig, rng: &mut impl Rng) -> Result<Self, TaggerError> {
        validate(input_dim, cfg)?;
        let rows = 2 * cfg.layers;
        Ok(Self {
            bridge: Dense::glorot(input_dim, rows * cfg.hidden, rng),
            decoder: BiLstm::new(input_dim, cfg.hidden, cfg.layers, cfg.dropout, rng),
            head: Dense::glorot(2 * cfg.hidden, IobLabel::COUNT, rng),
        })
    }

    pub fn seeded(input_dim: usize, cfg: &TaggerConfig, seed: u64) -> Result<Self, TaggerError> {
        Self::new(input_dim, cfg, &mut seeded_rng(seed))
    }

    pub fn zeros(input_dim: usize, cfg: &TaggerConfig) -> Result<Self, TaggerError> {
        validate(input_dim, cfg)?;
        Ok(Self {
            bridge: Dense::zeros(input_dim, 2 * cfg.layers * cfg.hidden),
            decoder: BiLstm::zeros(input_dim, cfg.hidden, cfg.layers, cfg.dropout),
            head: Dense::zeros(2 * cfg.hidden, IobLabel::COUNT),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.bridge.input_dim()
    }

    pub fn config(&self) -> TaggerConfig {
        TaggerConfig {
            hidden: self.decoder.hidden(),
            layers: self.decoder.num_layers(),
            dropout: self.decoder.dropout,
        }
    }

    /// Label logits (T x 3) for one segment.
    pub fn forward(
        &self,
        pooled: ArrayView1<f64>,
        tokens: ArrayView2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, TaggerCache), TaggerError> {
        let d = self.input_dim();
        for got in [pooled.len(), tokens.ncols()] {
            if got != d {
                return Err(TaggerError::DimMismatch { expected: d, got });
            }
        }
        let pooled = pooled.to_owned().insert_axis(ndarray::Axis(0));
        let h0_flat = self.bridge.forward(pooled.view())?;
        let h0 = h0_flat
            .into_shape_with_order((self.decoder.state_rows(), self.decoder.hidden()))
            .map_err(|e| NeuralError::Shape(e.to_string()))?;
        let c0 = Array2::zeros(h0.raw_dim());
        let (lstm_out, lstm) = self.decoder.forward(tokens, h0.view(), c0.view(), mode, rng)?;
        let logits = self.head.forward(lstm_out.view())?;
        Ok((logits, TaggerCache { pooled, lstm, lstm_out }))
    }

    /// Eval-mode label log-probabilities (T x 3).
    pub fn log_probs(&self, pooled: ArrayView1<f64>, tokens: ArrayView2<f64>) -> Result<Array2<f64>, TaggerError> {
        let (logits, _) = self.forward(pooled, tokens, Mode::Eval, &mut seeded_rng(0))?;
        Ok(log_softmax_rows(logits.view()))
    }

    /// Parameter gradients for upstream logit gradients `d_logits` (T x 3).
    pub fn backward(&self, cache: &TaggerCache, d_logits: ArrayView2<f64>) -> Result<TaggerModel, TaggerError> {
        let (d_lstm_out, head) = self.head.backward(cache.lstm_out.view(), d_logits)?;
        let g = self.decoder.backward(&cache.lstm, d_lstm_out.view())?;
        let d_h0 = g
            .d_h0
            .into_shape_with_order((1, self.bridge.output_dim()))
            .map_err(|e| NeuralError::Shape(e.to_string()))?;
        let (_, bridge) = self.bridge.backward(cache.pooled.view(), d_h0.view())?;
        Ok(TaggerModel {
            bridge,
            decoder: g.params,
            head,
        })
    }

    pub fn to_checkpoint(&self, seed: u64, config: serde_json::Value) -> Checkpoint {
        let cfg = self.config();
        let dims = BTreeMap::from([
            ("input".to_string(), self.input_dim()),
            ("hidden".to_string(), cfg.hidden),
            ("layers".to_string(), cfg.layers),
        ]);
        let mut config = config;
        if let Some(map) = config.as_object_mut() {
            map.insert("dropout".into(), cfg.dropout.into());
        }
        Checkpoint::from_params(ARCHITECTURE, dims, seed, config, self)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, TaggerError> {
        if ckpt.meta.architecture != ARCHITECTURE {
            return Err(NeuralError::Checkpoint(format!(
                "expected a {ARCHITECTURE} checkpoint, found {}",
                ckpt.meta.architecture
            ))
            .into());
        }
        let cfg = TaggerConfig {
            hidden: ckpt.dim("hidden")?,
            layers: ckpt.dim("layers")?,
            dropout: ckpt.meta.config.get("dropout").and_then(|v| v.as_f64()).unwrap_or(0.1),
        };
        let mut model = Self::zeros(ckpt.dim("input")?, &cfg)?;
        ckpt.load_into(&mut model)?;
        Ok(model)
    }
}

fn validate(input_dim: usize, cfg: &TaggerConfig) -> Result<(), TaggerError> {
    if input_dim == 0 || cfg.hidden == 0 || cfg.layers == 0 {
        return Err(TaggerError::Config(format!(
            "input {input_dim}, hidden {}, layers {} must all be positive",
            cfg.hidden, cfg.layers
        )));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(TaggerError::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
    }
    Ok(())
}
