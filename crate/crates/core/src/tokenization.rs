//! Word tokenization with character offsets, and greedy BPE subword
//! tokenization against a loaded merge table.
//!
//! All offsets are counted in Unicode scalar values (`char`s), the same unit
//! the corpus uses for `answer_start`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

/// Languages handled by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fi,
    Ja,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fi => "fi",
            Language::Ja => "ja",
        }
    }

    /// Whether text in this language is lowercased before lookups.
    pub fn folds_case(self) -> bool {
        !matches!(self, Language::Ja)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error)]
#[error("unknown language `{0}` (expected en, fi or ja)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    /// Accepts both ISO codes and the full English names used by TyDiQA dumps.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "fi" | "finnish" => Ok(Language::Fi),
            "ja" | "japanese" => Ok(Language::Ja),
            _ => Err(UnknownLanguage(s.to_string())),
        }
    }
}

/// A word token with its half-open character range in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.char_start < end && start < self.char_end
    }
}

/// True for characters in any Unicode punctuation category (Pc, Pd, Ps, Pe, Pi, Pf, Po).
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// True when every character of `s` is punctuation (and `s` is non-empty).
pub fn is_punctuation_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_punctuation)
}

/// Maps character offsets to byte offsets for slicing.
#[derive(Debug, Clone)]
pub struct CharIndex<'a> {
    text: &'a str,
    byte_offsets: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut byte_offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_offsets.push(text.len());
        Self { text, byte_offsets }
    }

    pub fn char_len(&self) -> usize {
        self.byte_offsets.len() - 1
    }

    /// Slice by character range; `None` if the range is out of bounds or reversed.
    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.char_len() {
            return None;
        }
        Some(&self.text[self.byte_offsets[start]..self.byte_offsets[end]])
    }
}

/// Slice `text` by a character range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    CharIndex::new(text).slice(start, end)
}

/// Rule-based word tokenization.
///
/// For English and Finnish the text is split on whitespace and each maximal run
/// of punctuation becomes its own token. Japanese text is split into one token
/// per non-whitespace character.
pub fn word_tokenize(text: &str, language: Language) -> Vec<Token> {
    match language {
        Language::Ja => text
            .chars()
            .enumerate()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| Token {
                text: c.to_string(),
                char_start: i,
                char_end: i + 1,
            })
            .collect(),
        Language::En | Language::Fi => split_words_and_punctuation(text),
    }
}

fn split_words_and_punctuation(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut current_is_punct = false;

    let mut flush = |current: &mut String, start: usize, end: usize| {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current),
                char_start: start,
                char_end: end,
            });
        }
    };

    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, start, i);
            continue;
        }
        let punct = is_punctuation(c);
        if current.is_empty() {
            start = i;
            current_is_punct = punct;
        } else if punct != current_is_punct {
            flush(&mut current, start, i);
            start = i;
            current_is_punct = punct;
        }
        current.push(c);
    }
    let end = text.chars().count();
    flush(&mut current, start, end);
    tokens
}

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error("invalid subword model: {0}")]
    Invalid(String),
}

fn format_err(file: &str, line: usize, message: impl Into<String>) -> SubwordError {
    SubwordError::Format {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// A BPE vocabulary with its merge table and embedding matrix.
#[derive(Debug, Clone)]
pub struct SubwordModel {
    tokens: Vec<String>,
    vocab: HashMap<String, u32>,
    merge_ranks: HashMap<(String, String), usize>,
    embeddings: Array2<f64>,
    unk_id: u32,
    lowercase: bool,
}

impl SubwordModel {
    /// The unknown-symbol token. If the vocabulary lacks it, id 0 is used.
    pub const UNK: &'static str = "<unk>";

    /// Builds a model from in-memory parts. `embeddings` rows follow vocabulary order.
    pub fn from_parts(
        tokens: Vec<String>,
        merges: Vec<(String, String)>,
        embeddings: Array2<f64>,
    ) -> Result<Self, SubwordError> {
        if tokens.is_empty() {
            return Err(SubwordError::Invalid("empty vocabulary".into()));
        }
        if embeddings.nrows() != tokens.len() {
            return Err(SubwordError::Invalid(format!(
                "{} embedding rows for a vocabulary of {}",
                embeddings.nrows(),
                tokens.len()
            )));
        }
        let mut vocab = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if vocab.insert(tok.clone(), id as u32).is_some() {
                return Err(SubwordError::Invalid(format!("duplicate vocabulary entry `{tok}`")));
            }
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.into_iter().enumerate() {
            for sym in [&left, &right] {
                if !vocab.contains_key(sym) {
                    return Err(SubwordError::Invalid(format!(
                        "merge {rank} references unknown symbol `{sym}`"
                    )));
                }
            }
            let merged = format!("{left}{right}");
            if !vocab.contains_key(&merged) {
                return Err(SubwordError::Invalid(format!(
                    "merge {rank} produces `{merged}` which is not in the vocabulary"
                )));
            }
            merge_ranks.entry((left, right)).or_insert(rank);
        }
        let unk_id = vocab.get(Self::UNK).copied().unwrap_or(0);
        Ok(Self {
            tokens,
            vocab,
            merge_ranks,
            embeddings,
            unk_id,
            lowercase: true,
        })
    }

    /// Disables or enables lowercasing before lookup (on by default).
    pub fn with_case_folding(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn merge_count(&self) -> usize {
        self.merge_ranks.len()
    }

    /// Applies the merge table to one word and returns the resulting symbols.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, pair)| {
                    self.merge_ranks
                        .get(&(pair[0].clone(), pair[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self.merge_ranks.get(&(symbols[i].clone(), symbols[i + 1].clone())) == Some(&rank)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Subword ids for `text`. Words are split with the whitespace/punctuation
    /// rule and each word is segmented independently.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        split_words_and_punctuation(&text)
            .iter()
            .flat_map(|w| self.segment_word(&w.text))
            .map(|sym| self.vocab.get(&sym).copied().unwrap_or(self.unk_id))
            .collect()
    }
}

/// Subword ids of `text` under `model`.
pub fn subword_tokenize(text: &str, model: &SubwordModel) -> Vec<u32> {
    model.tokenize(text)
}

/// Loads a vocabulary (one token per line), a merge table (`left right` per
/// line) and word2vec text embeddings.
pub fn load_subword_model(
    vocab_path: impl AsRef<Path>,
    merges_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<SubwordModel, SubwordError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| SubwordError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let vocab_path = vocab_path.as_ref();
    let merges_path = merges_path.as_ref();
    let embeddings_path = embeddings_path.as_ref();
    parse_subword_model(
        &read(vocab_path)?,
        &read(merges_path)?,
        &read(embeddings_path)?,
        (
            &vocab_path.display().to_string(),
            &merges_path.display().to_string(),
            &embeddings_path.display().to_string(),
        ),
    )
}

/// Parses the three subword model files from strings. `names` label errors.
pub fn parse_subword_model(
    vocab_text: &str,
    merges_text: &str,
    embeddings_text: &str,
    names: (&str, &str, &str),
) -> Result<SubwordModel, SubwordError> {
    let (vocab_name, merges_name, emb_name) = names;
    let tokens: Vec<String> = vocab_text
        .lines()
        .map(|l| l.split('\t').next().unwrap_or("").trim_end_matches('\r').to_string())
        .collect();
    if let Some(i) = tokens.iter().position(String::is_empty) {
        return Err(format_err(vocab_name, i + 1, "empty vocabulary entry"));
    }
    let vocab: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut merges = Vec::new();
    for (i, line) in merges_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(format_err(merges_name, i + 1, "expected `left right`"));
        }
        for sym in &parts {
            if !vocab.contains_key(sym) {
                return Err(format_err(
                    merges_name,
                    i + 1,
                    format!("merge references unknown symbol `{sym}`"),
                ));
            }
        }
        merges.push((parts[0].to_string(), parts[1].to_string()));
    }

    let mut lines = embeddings_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(emb_name, 1, "missing `V E` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format_err(emb_name, 1, "header must be two integers `V E`"))?;
    let [rows, dim] = dims[..] else {
        return Err(format_err(emb_name, 1, "header must be two integers `V E`"));
    };
    if rows != tokens.len() {
        return Err(format_err(
            emb_name,
            1,
            format!("header declares {rows} rows but the vocabulary has {}", tokens.len()),
        ));
    }
    let mut embeddings = Array2::<f64>::zeros((rows, dim));
    let mut seen = vec![false; rows];
    let mut count = 0;
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        count += 1;
        if count > rows {
            return Err(format_err(
                emb_name,
                i + 1,
                format!("more rows than the declared {rows}"),
            ));
        }
        let mut fields = line.split(' ');
        let tok = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(emb_name, i + 1, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(format_err(
                emb_name,
                i + 1,
                format!("row has {} values, header declares {dim}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format_err(emb_name, i + 1, "non-finite value"));
        }
        let id = *vocab
            .get(tok)
            .ok_or_else(|| format_err(emb_name, i + 1, format!("token `{tok}` not in vocabulary")))?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(format_err(emb_name, i + 1, format!("duplicate row for `{tok}`")));
        }
        embeddings.row_mut(id).assign(&ndarray::Array1::from(values));
    }
    if count != rows {
        return Err(format_err(
            emb_name,
            1,
            format!("header declares {rows} rows but {count} were found"),
        ));
    }
    SubwordModel::from_parts(tokens, merges, embeddings).map_err(|e| match e {
        SubwordError::Invalid(msg) => format_err(merges_name, 0, msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(tokens: &[Token]) -> Vec<(&str, usize, usize)> {
        tokens
            .iter()
            .map(|t| (t.text.as_str(), t.char_start, t.char_end))
            .collect()
    }

    #[test]
    fn english_question_splits_trailing_punctuation() {
        let toks = word_tokenize("When was it?", Language::En);
        assert_eq!(
            spans(&toks),
            vec![("When", 0, 4), ("was", 5, 8), ("it", 9, 11), ("?", 11, 12)]
        );
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(word_tokenize("", Language::En).is_empty());
        assert!(word_tokenize("   ", Language::Fi).is_empty());
        assert!(word_tokenize("", Language::Ja).is_empty());
    }

    #[test]
    fn japanese_is_split_per_character() {
        let toks = word_tokenize("日本語", Language::Ja);
        assert_eq!(spans(&toks), vec![("日", 0, 1), ("本", 1, 2), ("語", 2, 3)]);
        let toks = word_tokenize("東京 です", Language::Ja);
        assert_eq!(toks.len(), 4);
        assert_eq!(toks[2].char_start, 3);
    }

    #[test]
    fn punctuation_runs_stay_together() {
        let toks = word_tokenize("wait...what?!", Language::En);
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["wait", "...", "what", "?!"]);
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        let text = "Milloin Suomi itsenäistyi?";
        let toks = word_tokenize(text, Language::Fi);
        let idx = CharIndex::new(text);
        for t in &toks {
            assert_eq!(idx.slice(t.char_start, t.char_end), Some(t.text.as_str()));
        }
        assert_eq!(toks.last().unwrap().char_end, text.chars().count());
    }

    #[test]
    fn language_parsing_accepts_codes_and_names() {
        assert_eq!("fi".parse::<Language>().unwrap(), Language::Fi);
        assert_eq!("Japanese".parse::<Language>().unwrap(), Language::Ja);
        assert!("arabic".parse::<Language>().is_err());
    }

    fn tiny_model(tokens: &[&str], merges: &[(&str, &str)]) -> SubwordModel {
        let n = tokens.len();
        let emb = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        SubwordModel::from_parts(
            tokens.iter().map(|s| s.to_string()).collect(),
            merges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            emb,
        )
        .unwrap()
    }

    #[test]
    fn whole_word_entry_maps_to_single_id() {
        let m = tiny_model(&["<unk>", "h", "i", "hi"], &[("h", "i")]);
        assert_eq!(subword_tokenize("hi", &m), vec![3]);
    }

    #[test]
    fn single_merge_applied_by_hand() {
        let m = tiny_model(&["<unk>", "a", "b", "c", "ab"], &[("a", "b")]);
        assert_eq!(
            subword_tokenize("abc", &m),
            vec![m.id("ab").unwrap(), m.id("c").unwrap()]
        );
    }

    #[test]
    fn unknown_character_maps_to_unk() {
        let m = tiny_model(&["<unk>", "a"], &[]);
        assert_eq!(subword_tokenize("z", &m), vec![m.unk_id()]);
        assert_eq!(m.unk_id(), 0);
    }

    #[test]
    fn merges_follow_rank_not_position() {
        // "abc": (b,c) has the lower rank, so it wins over (a,b).
        let m = tiny_model(
            &["<unk>", "a", "b", "c", "bc", "ab", "abc"],
            &[("b", "c"), ("a", "b"), ("a", "bc")],
        );
        assert_eq!(m.segment_word("abc"), vec!["abc"]);
        let m = tiny_model(&["<unk>", "a", "b", "c", "bc", "ab"], &[("b", "c"), ("a", "b")]);
        assert_eq!(m.segment_word("abc"), vec!["a", "bc"]);
    }

    #[test]
    fn case_folding_is_switchable() {
        let m = tiny_model(&["<unk>", "a", "A"], &[]);
        assert_eq!(subword_tokenize("A", &m), vec![1]);
        let m = m.with_case_folding(false);
        assert_eq!(subword_tokenize("A", &m), vec![2]);
    }

    #[test]
    fn parses_word2vec_text() {
        let m = parse_subword_model("<unk>\na\nb\n", "", "3 2\n<unk> 0 0\na 1 2\nb 3 4\n", ("v", "m", "e")).unwrap();
        assert_eq!(m.vocab_size(), 3);
        assert_eq!(m.dim(), 2);
        assert_eq!(m.embeddings()[[2, 1]], 4.0);
    }

    #[test]
    fn row_count_mismatch_is_format_error() {
        let err = parse_subword_model(
            "<unk>\na\nb\n",
            "",
            "3 2\n<unk> 0 0\na 1 2\nb 3 4\nb 5 6\n",
            ("v", "m", "e"),
        )
        .unwrap_err();
        assert!(matches!(err, SubwordError::Format { .. }), "{err}");
    }

    #[test]
    fn row_length_mismatch_is_format_error() {
        let err = parse_subword_model("<unk>\na\n", "", "2 2\n<unk> 0 0\na 1\n", ("v", "m", "e")).unwrap_err();
        assert!(matches!(err, SubwordError::Format { line: 3, .. }), "{err}");
    }

    #[test]
    fn merge_with_unknown_symbol_is_format_error() {
        let err = parse_subword_model("<unk>\na\n", "a q\n", "2 1\n<unk> 0\na 1\n", ("v", "m", "e")).unwrap_err();
        assert!(matches!(err, SubwordError::Format { line: 1, .. }), "{err}");
    }

    #[test]
    fn accepts_paper_scale_dimensions() {
        let v = 25_000;
        let e = 100;
        let vocab: String = (0..v).map(|i| format!("t{i}\n")).collect();
        let mut emb = format!("{v} {e}\n");
        let row: String = (0..e).map(|_| " 0.5").collect();
        for i in 0..v {
            emb.push_str(&format!("t{i}{row}\n"));
        }
        let m = parse_subword_model(&vocab, "", &emb, ("v", "m", "e")).unwrap();
        assert_eq!((m.vocab_size(), m.dim()), (25_000, 100));
    }
}
