//! Hand-differentiated numerical kernels.
//!
//! Parameters are held in `f64`; checkpoints store them as `f32`. Every
//! layer exposes a `forward` and an exact `backward`, and gradients are
//! represented by a value of the same type as the layer (a `Dense` holding
//! `dW` and `db`, and so on), which keeps the optimizer generic through
//! [`Parameters`].

mod adam;
mod checkpoint;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod lstm;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, TensorInfo, CHECKPOINT_MAGIC};
pub use dense::Dense;
pub use dropout::{dropout, Masked, Mode};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_REL_FLOOR};
pub use loss::{bce_with_logits, log_softmax_rows, sigmoid, weighted_cross_entropy};
pub use lstm::{BiLstm, BiLstmCache, BiLstmGrads, LstmCell};
pub use schedule::LrSchedule;

use ndarray::{ArrayViewD, ArrayViewMutD};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> NeuralError {
    NeuralError::Shape(msg.into())
}

/// Named parameter tensors in a fixed declaration order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, t) in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Inverse of [`Parameters::flatten`].
    fn assign_flat(&mut self, values: &[f64]) -> Result<(), NeuralError> {
        if values.len() != self.param_count() {
            return Err(shape_err(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut rest = values;
        for mut t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.iter_mut().zip(head).for_each(|(p, v)| *p = *v);
            rest = tail;
        }
        Ok(())
    }

    /// A copy with every parameter set to zero, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let others = other.tensors();
        for (mut t, (_, o)) in self.tensors_mut().into_iter().zip(others) {
            t.zip_mut_with(&o, |a, b| *a += scale * b);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Deterministic RNG used for initialization, shuffling and dropout.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
