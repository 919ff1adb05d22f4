//! Corpus ingestion for Answerable-TyDiQA style JSONL files.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::labels::IobLabel;
use crate::tokenization::{is_punctuation_token, word_tokenize, CharIndex, Language, Token};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("sample {id}: {message}")]
    Validation { id: String, message: String },
    #[error("sample {id}: answer does not overlap any token")]
    Labeling { id: String },
}

/// How offset/text mismatches in the input are handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strictness {
    /// Drop the sample and log a warning.
    #[default]
    Skip,
    /// Fail the whole load.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Character offset into the context.
    pub start: usize,
}

impl Answer {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn end(&self) -> usize {
        self.start + self.char_len()
    }
}

/// One question/context pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSample {
    pub id: String,
    pub language: Language,
    pub question_text: String,
    pub context_text: String,
    pub answer: Option<Answer>,
}

impl QaSample {
    pub fn is_answerable(&self) -> bool {
        self.answer.is_some()
    }

    /// Checks that the answer (if any) lies inside the context and matches it.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let Some(answer) = &self.answer else {
            return Ok(());
        };
        let idx = CharIndex::new(&self.context_text);
        match idx.slice(answer.start, answer.end()) {
            None => Err(CorpusError::Validation {
                id: self.id.clone(),
                message: format!(
                    "answer range [{}, {}) exceeds context length {}",
                    answer.start,
                    answer.end(),
                    idx.char_len()
                ),
            }),
            Some(slice) if slice != answer.text => Err(CorpusError::Validation {
                id: self.id.clone(),
                message: format!("context slice {slice:?} != answer text {:?}", answer.text),
            }),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    answer_text: String,
    answer_start: i64,
}

#[derive(Debug, Deserialize)]
struct RawSample {
    id: String,
    language: String,
    question_text: String,
    document_plaintext: String,
    annotations: Vec<RawAnnotation>,
}

/// Loads samples in `languages` from a JSONL file, preserving file order.
pub fn load_dataset(
    path: impl AsRef<Path>,
    languages: &HashSet<Language>,
    strictness: Strictness,
) -> Result<Vec<QaSample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(BufReader::new(file), languages, strictness).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Same as [`load_dataset`] over any buffered reader.
pub fn read_dataset(
    reader: impl BufRead,
    languages: &HashSet<Language>,
    strictness: Strictness,
) -> Result<Vec<QaSample>, CorpusError> {
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse { line: line_no, source })?;
        // Languages outside the supported set can never be requested.
        let Ok(language) = raw.language.parse::<Language>() else {
            continue;
        };
        if !languages.contains(&language) {
            continue;
        }
        let sample = sample_from_raw(raw, language);
        match sample.validate() {
            Ok(()) => samples.push(sample),
            Err(e) if strictness == Strictness::Skip => {
                log::warn!("line {line_no}: skipping: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(samples)
}

fn sample_from_raw(raw: RawSample, language: Language) -> QaSample {
    let answer = raw
        .annotations
        .into_iter()
        .find(|a| a.answer_start >= 0)
        .map(|a| Answer {
            text: a.answer_text,
            start: a.answer_start as usize,
        });
    QaSample {
        id: raw.id,
        language,
        question_text: raw.question_text,
        context_text: raw.document_plaintext,
        answer,
    }
}

/// Gold IOB labels over context `tokens`: every token overlapping the answer
/// range is inside the answer, the first of them gets `B`.
pub fn derive_gold_iob(sample: &QaSample, tokens: &[Token]) -> Result<Vec<IobLabel>, CorpusError> {
    let mut labels = vec![IobLabel::O; tokens.len()];
    let Some(answer) = &sample.answer else {
        return Ok(labels);
    };
    let (start, end) = (answer.start, answer.end());
    let mut inside = false;
    for (label, tok) in labels.iter_mut().zip(tokens) {
        if tok.overlaps(start, end) {
            *label = if inside { IobLabel::I } else { IobLabel::B };
            inside = true;
        }
    }
    if !inside {
        return Err(CorpusError::Labeling { id: sample.id.clone() });
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Counts of first and last question tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub language: Language,
    pub split: Split,
    pub n_samples: usize,
    pub n_answerable: usize,
    #[serde(serialize_with = "serialize_by_count")]
    pub first_token_freq: BTreeMap<String, usize>,
    #[serde(serialize_with = "serialize_by_count")]
    pub last_token_freq: BTreeMap<String, usize>,
}

/// Entries sorted by descending count, then token.
pub fn sorted_by_count(freq: &BTreeMap<String, usize>) -> Vec<(&str, usize)> {
    let mut entries: Vec<(&str, usize)> = freq.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries
}

fn serialize_by_count<S: Serializer>(freq: &BTreeMap<String, usize>, serializer: S) -> Result<S::Ok, S::Error> {
    let entries = sorted_by_count(freq);
    let mut map = serializer.serialize_map(Some(entries.len()))?;
    for (k, v) in entries {
        map.serialize_entry(k, &v)?;
    }
    map.end()
}

/// First-token and last-non-punctuation-token frequencies of the questions.
/// Tokens are case-folded; empty questions are skipped.
pub fn token_position_stats(samples: &[QaSample], language: Language, split: Split) -> CorpusStats {
    let mut first_token_freq = BTreeMap::new();
    let mut last_token_freq = BTreeMap::new();
    for sample in samples {
        let tokens = word_tokenize(&sample.question_text, sample.language);
        let Some(first) = tokens.first() else {
            continue;
        };
        *first_token_freq.entry(first.text.to_lowercase()).or_insert(0) += 1;
        if let Some(last) = tokens.iter().rev().find(|t| !is_punctuation_token(&t.text)) {
            *last_token_freq.entry(last.text.to_lowercase()).or_insert(0) += 1;
        }
    }
    CorpusStats {
        language,
        split,
        n_samples: samples.len(),
        n_answerable: samples.iter().filter(|s| s.is_answerable()).count(),
        first_token_freq,
        last_token_freq,
    }
}
