//! Multilingual extractive question answering at desk scale.
//!
//! The crate covers the whole pipeline that sits behind a frozen encoder:
//!
//! - [`corpus`]: JSONL ingestion, gold IOB labels and question token statistics.
//! - [`tokenization`]: offset-preserving word tokenization and greedy BPE.
//! - [`features`]: bag of words, overlap, pooled subword embeddings, and the
//!   CVEC context-vector file format.
//! - [`neural`]: dense layers, dropout, a bidirectional LSTM, losses, Adam,
//!   and a finite-difference gradient checker.
//! - [`answerability`]: the feedforward answerability classifier.
//! - [`tagger`]: the BiLSTM IOB tagger, beam decoding and span extraction.
//! - [`evaluate`]: accuracy, PR curves, token F1, SQuAD v2 scoring,
//!   perplexity and the cross-lingual report.
//! - [`interpret`]: Integrated Gradients and the character-substitution attack.

pub mod answerability;
pub mod corpus;
pub mod evaluate;
pub mod features;
pub mod interpret;
pub mod labels;
pub mod neural;
pub mod tagger;
pub mod tokenization;

pub use corpus::{Answer, QaSample};
pub use labels::IobLabel;
pub use tokenization::{Language, Token};
