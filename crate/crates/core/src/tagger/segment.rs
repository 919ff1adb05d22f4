use serde::{Deserialize, Serialize};

use super::TaggerError;

pub const DEFAULT_MAX_LEN: usize = 512;
pub const DEFAULT_OVERLAP: usize = 128;

/// The full question plus one window of context tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub sample_id: String,
    pub segment_index: usize,
    pub question_tokens: usize,
    /// Context token range `[ctx_start, ctx_end)` in sample token space.
    pub ctx_start: usize,
    pub ctx_end: usize,
}

impl Segment {
    pub fn context_len(&self) -> usize {
        self.ctx_end - self.ctx_start
    }

    /// Total tokens in the segment, question included.
    pub fn len(&self) -> usize {
        self.question_tokens + self.context_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `context_tokens` into windows of `max_len - question_tokens`
/// that advance by `window - overlap`. A context that fits yields one
/// segment, as does an empty one.
pub fn segment_sample(
    sample_id: &str,
    question_tokens: usize,
    context_tokens: usize,
    max_len: usize,
    overlap: usize,
) -> Result<Vec<Segment>, TaggerError> {
    if question_tokens + 1 >= max_len {
        return Err(TaggerError::Unsegmentable {
            question_tokens,
            max_len,
        });
    }
    let window = max_len - question_tokens;
    if overlap >= window {
        return Err(TaggerError::Config(format!(
            "overlap {overlap} does not leave a positive stride in a window of {window}"
        )));
    }
    let stride = window - overlap;
    let mut segments = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(context_tokens);
        segments.push(Segment {
            sample_id: sample_id.to_string(),
            segment_index: segments.len(),
            question_tokens,
            ctx_start: start,
            ctx_end: end,
        });
        if end == context_tokens {
            return Ok(segments);
        }
        start += stride;
    }
}
