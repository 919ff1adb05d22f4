//! Input representations for the answerability classifier.

mod cvec;

pub use cvec::{
    read_context_vectors, write_context_vectors, ContextVectorSet, CvecError, CvecReader, CvecWriter, CVEC_MAGIC,
    MAX_SEGMENT_TOKENS,
};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QaSample;
use crate::tokenization::{word_tokenize, Language, SubwordModel};

/// Default bag-of-words cap per language.
pub const DEFAULT_BOW_SIZE: usize = 60_000;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("duplicate feature block `{0}`")]
    DuplicateBlock(String),
    #[error("non-finite value in feature block `{0}`")]
    NonFinite(String),
    #[error("overlap needs a non-empty question")]
    EmptyQuestion,
    #[error("vocabulary is frozen")]
    Frozen,
    #[error("vocabulary is full ({0} entries)")]
    Full(usize),
    #[error("feature set `{0}` needs {1}")]
    MissingResource(FeatureSet, &'static str),
    #[error("no context vectors for sample `{0}`")]
    MissingVectors(String),
}

/// Token→index map for bag-of-words features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    max_size: usize,
    frozen: bool,
}

impl Vocabulary {
    pub fn new(max_size: usize) -> Self {
        Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            max_size,
            frozen: false,
        }
    }

    /// Rebuilds a frozen vocabulary from its ordered token list.
    pub fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Self, FeatureError> {
        let mut vocab = Self::new(max_size);
        for t in tokens {
            vocab.insert(&t)?;
        }
        vocab.freeze();
        Ok(vocab)
    }

    /// Inserts `token` if absent and returns its index.
    pub fn insert(&mut self, token: &str) -> Result<usize, FeatureError> {
        if let Some(&i) = self.index.get(token) {
            return Ok(i);
        }
        if self.frozen {
            return Err(FeatureError::Frozen);
        }
        if self.tokens.len() >= self.max_size {
            return Err(FeatureError::Full(self.max_size));
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        Ok(i)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }
}

#[derive(Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    max_size: usize,
    frozen: bool,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        let index = repr.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens: repr.tokens,
            index,
            max_size: repr.max_size,
            frozen: repr.frozen,
        }
    }
}

/// Word tokens used by the explicit features: rule tokenization, case-folded
/// for languages with case.
pub fn feature_tokens(text: &str, language: Language) -> Vec<String> {
    word_tokenize(text, language)
        .into_iter()
        .map(|t| {
            if language.folds_case() {
                t.text.to_lowercase()
            } else {
                t.text
            }
        })
        .collect()
}

/// Fits a frozen vocabulary over question and context tokens, most frequent
/// first, ties broken lexicographically, truncated to `max_size`.
pub fn fit_bow_vocab(samples: &[QaSample], max_size: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in samples {
        for text in [&s.question_text, &s.context_text] {
            for tok in feature_tokens(text, s.language) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    let tokens = ranked.into_iter().map(|(t, _)| t).collect();
    Vocabulary::from_tokens(tokens, max_size).expect("truncated to max_size")
}

/// A named, contiguous range of a [`FeatureVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Dense feature values with a block schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    schema: Vec<FeatureBlock>,
}

impl FeatureVector {
    /// A vector holding a single block.
    pub fn single(name: &str, values: Vec<f64>) -> Result<Self, FeatureError> {
        combine_features(vec![(name.to_string(), values)])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn schema(&self) -> &[FeatureBlock] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.schema
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.start..b.start + b.len])
    }

    /// Block containing feature `index`, and the offset inside it.
    pub fn locate(&self, index: usize) -> Option<(&FeatureBlock, usize)> {
        locate_in_schema(&self.schema, index)
    }

    /// Appends all blocks of `other` after the blocks of `self`.
    pub fn concat(mut self, other: FeatureVector) -> Result<Self, FeatureError> {
        let offset = self.values.len();
        for block in other.schema {
            if self.schema.iter().any(|b| b.name == block.name) {
                return Err(FeatureError::DuplicateBlock(block.name));
            }
            self.schema.push(FeatureBlock {
                start: block.start + offset,
                ..block
            });
        }
        self.values.extend(other.values);
        Ok(self)
    }

    pub fn to_array(&self) -> Array1<f64> {
        Array1::from(self.values.clone())
    }
}

pub fn locate_in_schema(schema: &[FeatureBlock], index: usize) -> Option<(&FeatureBlock, usize)> {
    schema
        .iter()
        .find(|b| index >= b.start && index < b.start + b.len)
        .map(|b| (b, index - b.start))
}

/// Concatenates named blocks in order, recording each block's range.
pub fn combine_features(blocks: Vec<(String, Vec<f64>)>) -> Result<FeatureVector, FeatureError> {
    let mut seen = HashSet::new();
    let mut values = Vec::with_capacity(blocks.iter().map(|b| b.1.len()).sum());
    let mut schema = Vec::with_capacity(blocks.len());
    for (name, block) in blocks {
        if !seen.insert(name.clone()) {
            return Err(FeatureError::DuplicateBlock(name));
        }
        if block.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(name));
        }
        schema.push(FeatureBlock {
            name,
            start: values.len(),
            len: block.len(),
        });
        values.extend(block);
    }
    Ok(FeatureVector { values, schema })
}

/// Raw bag-of-words counts over the concatenated question and context.
pub fn bow_counts(question: &str, context: &str, language: Language, vocab: &Vocabulary) -> Vec<f64> {
    let mut counts = vec![0.0; vocab.len()];
    for text in [question, context] {
        for tok in feature_tokens(text, language) {
            if let Some(i) = vocab.get(&tok) {
                counts[i] += 1.0;
            }
        }
    }
    counts
}

/// Bag of words as a single-block feature vector named `bow`.
pub fn bow_vector(question: &str, context: &str, language: Language, vocab: &Vocabulary) -> FeatureVector {
    FeatureVector::single("bow", bow_counts(question, context, language, vocab)).expect("counts are finite")
}

/// Share of unique question tokens that also occur in the context.
/// Comparison is case-insensitive.
pub fn overlap_percent<S: AsRef<str>>(question_tokens: &[S], context_tokens: &[S]) -> Result<f64, FeatureError> {
    let question: HashSet<String> = question_tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    if question.is_empty() {
        return Err(FeatureError::EmptyQuestion);
    }
    let context: HashSet<String> = context_tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let shared = question.intersection(&context).count();
    Ok(shared as f64 / question.len() as f64)
}

/// Mean of the embedding rows of the subword ids of `text`; zeros for empty text.
pub fn pooled_embedding(text: &str, model: &SubwordModel) -> Vec<f64> {
    let ids = model.tokenize(text);
    let mut sum = vec![0.0; model.dim()];
    if ids.is_empty() {
        return sum;
    }
    let table = model.embeddings();
    for &id in &ids {
        for (acc, v) in sum.iter_mut().zip(table.row(id as usize)) {
            *acc += v;
        }
    }
    let n = ids.len() as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    sum
}

/// Selector for the classifier's input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Bow,
    Overlap,
    Embed,
    /// bow + overlap + embed.
    Combo,
    Cvec,
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Bow => "bow",
            FeatureSet::Overlap => "overlap",
            FeatureSet::Embed => "embed",
            FeatureSet::Combo => "combo",
            FeatureSet::Cvec => "cvec",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bow" => Ok(FeatureSet::Bow),
            "overlap" => Ok(FeatureSet::Overlap),
            "embed" => Ok(FeatureSet::Embed),
            "combo" => Ok(FeatureSet::Combo),
            "cvec" => Ok(FeatureSet::Cvec),
            other => Err(format!(
                "unknown feature set `{other}` (expected bow, overlap, embed, combo or cvec)"
            )),
        }
    }
}

impl FeatureSet {
    pub fn needs_vocab(self) -> bool {
        matches!(self, FeatureSet::Bow | FeatureSet::Combo)
    }

    pub fn needs_subwords(self) -> bool {
        matches!(self, FeatureSet::Embed | FeatureSet::Combo)
    }
}

/// Turns question/context text into feature vectors.
pub trait Featurize {
    fn featurize(
        &self,
        id: &str,
        question: &str,
        context: &str,
        language: Language,
    ) -> Result<FeatureVector, FeatureError>;

    fn featurize_sample(&self, sample: &QaSample) -> Result<FeatureVector, FeatureError> {
        self.featurize(&sample.id, &sample.question_text, &sample.context_text, sample.language)
    }
}

/// Builds any [`FeatureSet`] from the resources it needs.
pub struct Featurizer<'a> {
    pub set: FeatureSet,
    pub vocab: Option<&'a Vocabulary>,
    pub subwords: Option<&'a SubwordModel>,
    /// Pooled encoder vector per sample id, for [`FeatureSet::Cvec`].
    pub pooled: Option<&'a HashMap<String, Vec<f64>>>,
}

impl<'a> Featurizer<'a> {
    pub fn new(set: FeatureSet) -> Self {
        Self {
            set,
            vocab: None,
            subwords: None,
            pooled: None,
        }
    }

    pub fn with_vocab(mut self, vocab: &'a Vocabulary) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn with_subwords(mut self, model: &'a SubwordModel) -> Self {
        self.subwords = Some(model);
        self
    }

    pub fn with_pooled(mut self, pooled: &'a HashMap<String, Vec<f64>>) -> Self {
        self.pooled = Some(pooled);
        self
    }

    fn vocab(&self) -> Result<&'a Vocabulary, FeatureError> {
        self.vocab
            .ok_or(FeatureError::MissingResource(self.set, "a bag-of-words vocabulary"))
    }

    fn subwords(&self) -> Result<&'a SubwordModel, FeatureError> {
        self.subwords
            .ok_or(FeatureError::MissingResource(self.set, "a subword model"))
    }
}

fn overlap_block(question: &str, context: &str, language: Language) -> Vec<f64> {
    let q = feature_tokens(question, language);
    let c = feature_tokens(context, language);
    // Empty questions carry no overlap signal.
    vec![overlap_percent(&q, &c).unwrap_or(0.0)]
}

impl Featurize for Featurizer<'_> {
    fn featurize(
        &self,
        id: &str,
        question: &str,
        context: &str,
        language: Language,
    ) -> Result<FeatureVector, FeatureError> {
        let joined = || format!("{question} {context}");
        let blocks = match self.set {
            FeatureSet::Bow => vec![(
                "bow".to_string(),
                bow_counts(question, context, language, self.vocab()?),
            )],
            FeatureSet::Overlap => vec![("overlap".to_string(), overlap_block(question, context, language))],
            FeatureSet::Embed => vec![("embed".to_string(), pooled_embedding(&joined(), self.subwords()?))],
            FeatureSet::Combo => vec![
                (
                    "bow".to_string(),
                    bow_counts(question, context, language, self.vocab()?),
                ),
                ("overlap".to_string(), overlap_block(question, context, language)),
                ("embed".to_string(), pooled_embedding(&joined(), self.subwords()?)),
            ],
            FeatureSet::Cvec => {
                let pooled = self
                    .pooled
                    .ok_or(FeatureError::MissingResource(self.set, "context vectors"))?;
                let v = pooled
                    .get(id)
                    .ok_or_else(|| FeatureError::MissingVectors(id.to_string()))?;
                vec![("cvec".to_string(), v.clone())]
            }
        };
        combine_features(blocks)
    }
}

/// Human-readable name of feature `index`; bag-of-words entries are named by
/// their vocabulary token.
pub fn feature_name(schema: &[FeatureBlock], index: usize, vocab: Option<&Vocabulary>) -> String {
    match locate_in_schema(schema, index) {
        Some((block, offset)) if block.name == "bow" => match vocab.and_then(|v| v.token(offset)) {
            Some(tok) => tok.to_string(),
            None => format!("bow[{offset}]"),
        },
        Some((block, _)) if block.len == 1 => block.name.clone(),
        Some((block, offset)) => format!("{}[{offset}]", block.name),
        None => format!("#{index}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QaSample;
    use ndarray::Array2;

    fn sample(q: &str, c: &str) -> QaSample {
        QaSample {
            id: "s".into(),
            language: Language::En,
            question_text: q.into(),
            context_text: c.into(),
            answer: None,
        }
    }

    #[test]
    fn vocab_orders_by_frequency() {
        let v = fit_bow_vocab(&[sample("a", "b"), sample("a", "c")], 10);
        assert_eq!(v.tokens(), ["a", "b", "c"]);
        assert_eq!(v.get("a"), Some(0));
        assert!(v.is_frozen());
    }

    #[test]
    fn vocab_cap_breaks_ties_lexicographically() {
        let v = fit_bow_vocab(&[sample("a", "b"), sample("a", "c")], 2);
        assert_eq!(v.tokens(), ["a", "b"]);
    }

    #[test]
    fn empty_corpus_gives_empty_vocab() {
        assert!(fit_bow_vocab(&[], 5).is_empty());
    }

    #[test]
    fn frozen_vocab_rejects_inserts() {
        let mut v = fit_bow_vocab(&[sample("a", "")], 5);
        assert_eq!(v.insert("a"), Ok(0));
        assert_eq!(v.insert("z"), Err(FeatureError::Frozen));
    }

    #[test]
    fn bow_counts_question_and_context_together() {
        let vocab = Vocabulary::from_tokens(vec!["a".into(), "b".into()], 10).unwrap();
        let fv = bow_vector("a a", "b", Language::En, &vocab);
        assert_eq!(fv.values(), [2.0, 1.0]);
        assert_eq!(fv.schema()[0].name, "bow");
        let fv = bow_vector("a", "a b", Language::En, &vocab);
        assert_eq!(fv.values(), [2.0, 1.0]);
        let fv = bow_vector("x y", "z", Language::En, &vocab);
        assert_eq!(fv.values(), [0.0, 0.0]);
    }

    #[test]
    fn overlap_examples() {
        let q = ["when", "did", "finland", "gain", "independence"];
        let c = ["finland", "declared", "independence"];
        assert_eq!(overlap_percent(&q, &c).unwrap(), 0.4);
        assert_eq!(overlap_percent(&["a", "b"], &["b", "a", "c"]).unwrap(), 1.0);
        assert_eq!(overlap_percent(&["a"], &["b"]).unwrap(), 0.0);
        assert_eq!(overlap_percent(&["Finland"], &["finland"]).unwrap(), 1.0);
        let empty: [&str; 0] = [];
        assert_eq!(overlap_percent(&empty, &["a"]), Err(FeatureError::EmptyQuestion));
    }

    fn model() -> SubwordModel {
        let emb = Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 1.0, 2.0, 3.0, 6.0]).unwrap();
        SubwordModel::from_parts(vec!["<unk>".into(), "a".into(), "b".into()], vec![], emb).unwrap()
    }

    #[test]
    fn pooled_embedding_is_mean_of_rows() {
        let m = model();
        assert_eq!(pooled_embedding("a", &m), vec![1.0, 2.0]);
        assert_eq!(pooled_embedding("a b", &m), vec![2.0, 4.0]);
        assert_eq!(pooled_embedding("", &m), vec![0.0, 0.0]);
    }

    #[test]
    fn combine_concatenates_with_schema() {
        let fv = combine_features(vec![("bow".into(), vec![1.0, 0.0]), ("overlap".into(), vec![0.5])]).unwrap();
        assert_eq!(fv.values(), [1.0, 0.0, 0.5]);
        assert_eq!(
            fv.schema(),
            [
                FeatureBlock {
                    name: "bow".into(),
                    start: 0,
                    len: 2
                },
                FeatureBlock {
                    name: "overlap".into(),
                    start: 2,
                    len: 1
                },
            ]
        );
        let single = FeatureVector::single("x", vec![3.0, 4.0]).unwrap();
        assert_eq!(single.values(), [3.0, 4.0]);
    }

    #[test]
    fn combine_tracks_paper_scale_dimensions() {
        let fv = combine_features(vec![
            ("bow".into(), vec![0.0; 60_000]),
            ("overlap".into(), vec![0.0]),
            ("embed".into(), vec![0.0; 100]),
        ])
        .unwrap();
        assert_eq!(fv.len(), 60_101);
        assert_eq!(fv.schema().len(), 3);
        assert_eq!(fv.schema()[2].start, 60_001);
    }

    #[test]
    fn combine_rejects_duplicates_and_nan() {
        assert_eq!(
            combine_features(vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])]),
            Err(FeatureError::DuplicateBlock("a".into()))
        );
        assert_eq!(
            combine_features(vec![("a".into(), vec![f64::NAN])]),
            Err(FeatureError::NonFinite("a".into()))
        );
    }

    #[test]
    fn combo_featurizer_has_three_blocks() {
        let vocab = fit_bow_vocab(&[sample("a b", "b .")], 10);
        let m = model();
        let f = Featurizer::new(FeatureSet::Combo).with_vocab(&vocab).with_subwords(&m);
        let fv = f.featurize("s", "a b", "b", Language::En).unwrap();
        let names: Vec<_> = fv.schema().iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, ["bow", "overlap", "embed"]);
        assert_eq!(fv.len(), vocab.len() + 1 + 2);
        assert_eq!(fv.block("overlap").unwrap(), [0.5]);
        assert_eq!(feature_name(fv.schema(), 0, Some(&vocab)), vocab.tokens()[0]);
        assert_eq!(feature_name(fv.schema(), vocab.len(), Some(&vocab)), "overlap");
        assert_eq!(feature_name(fv.schema(), vocab.len() + 2, Some(&vocab)), "embed[1]");
    }

    #[test]
    fn missing_resources_are_reported() {
        let f = Featurizer::new(FeatureSet::Embed);
        assert!(matches!(
            f.featurize("s", "a", "b", Language::En),
            Err(FeatureError::MissingResource(FeatureSet::Embed, _))
        ));
    }
}
