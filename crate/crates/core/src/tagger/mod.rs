//! BiLSTM IOB tagger over frozen encoder vectors: segmenting, the model,
//! training, constrained beam decoding and span extraction.

mod decode;
mod model;
mod predict;
mod segment;
mod spans;
mod train;

pub use decode::{decode, exhaustive_best, is_legal, sequence_score, LegalityConfig};
pub use model::{TaggerCache, TaggerConfig, TaggerModel, ARCHITECTURE};
pub use predict::{answer, select_answer, write_predictions, Prediction};
pub use segment::{segment_sample, Segment, DEFAULT_MAX_LEN, DEFAULT_OVERLAP};
pub use spans::{extract_spans, tokens_from_offsets, AnswerSpan};
pub use train::{
    build_examples, degenerate_fraction, evaluate_examples, train_tagger, EpochStats, TaggerExample, TaggerHistory,
    TaggerTrainConfig, DEFAULT_CLASS_WEIGHTS,
};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("question of {question_tokens} tokens leaves no room for context in a window of {max_len}")]
    Unsegmentable { question_tokens: usize, max_len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("vector dimension {got} does not match the model's {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{labels} labels for {tokens} tokens")]
    Misaligned { labels: usize, tokens: usize },
    #[error("bad token offsets for `{id}`: {message}")]
    Offsets { id: String, message: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
