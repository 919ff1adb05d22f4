use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::TaggerError;
use crate::labels::IobLabel;
use crate::tokenization::{CharIndex, Token};

/// A candidate answer: token range inclusive on both ends, character range
/// half-open into the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub segment: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
    /// Mean log-probability of the predicted labels over the span.
    pub score: f64,
}

/// Spans opened by `B` and continued by consecutive `I`; any other label
/// closes them. `I` runs without a leading `B` are ignored.
pub fn extract_spans(
    labels: &[IobLabel],
    logprobs: ArrayView2<f64>,
    tokens: &[Token],
    context: &str,
    segment: usize,
) -> Result<Vec<AnswerSpan>, TaggerError> {
    if labels.len() != tokens.len() || logprobs.nrows() != labels.len() {
        return Err(TaggerError::Misaligned {
            labels: labels.len(),
            tokens: tokens.len(),
        });
    }
    let index = CharIndex::new(context);
    let mut spans = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        if labels[t] != IobLabel::B {
            t += 1;
            continue;
        }
        let start = t;
        t += 1;
        while t < labels.len() && labels[t] == IobLabel::I {
            t += 1;
        }
        let end = t - 1;
        let score = (start..=end).map(|i| logprobs[[i, labels[i].index()]]).sum::<f64>() / (end - start + 1) as f64;
        let (char_start, char_end) = (tokens[start].char_start, tokens[end].char_end);
        let text = index.slice(char_start, char_end).ok_or_else(|| TaggerError::Offsets {
            id: String::new(),
            message: format!("span [{char_start}, {char_end}) outside context"),
        })?;
        spans.push(AnswerSpan {
            segment,
            token_start: start,
            token_end: end,
            char_start,
            char_end,
            text: text.to_string(),
            score,
        });
    }
    Ok(spans)
}

/// Tokens for CVEC character offsets into `context`.
pub fn tokens_from_offsets(id: &str, context: &str, offsets: &[(u32, u32)]) -> Result<Vec<Token>, TaggerError> {
    let index = CharIndex::new(context);
    offsets
        .iter()
        .map(|&(s, e)| {
            let (s, e) = (s as usize, e as usize);
            let text = index
                .slice(s, e)
                .filter(|_| s < e)
                .ok_or_else(|| TaggerError::Offsets {
                    id: id.to_string(),
                    message: format!("token [{s}, {e}) outside a context of {} characters", index.char_len()),
                })?;
            Ok(Token {
                text: text.to_string(),
                char_start: s,
                char_end: e,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenization::{word_tokenize, Language};
    use ndarray::Array2;
    use IobLabel::{B, I, O};

    fn run(labels: &[IobLabel]) -> Vec<(usize, usize)> {
        let context = labels.iter().map(|_| "w").collect::<Vec<_>>().join(" ");
        let tokens = word_tokenize(&context, Language::En);
        let lp = Array2::from_elem((labels.len(), 3), (1.0f64 / 3.0).ln());
        extract_spans(labels, lp.view(), &tokens, &context, 0)
            .unwrap()
            .iter()
            .map(|s| (s.token_start, s.token_end))
            .collect()
    }

    #[test]
    fn forced_examples() {
        assert_eq!(run(&[O, B, I, O]), vec![(1, 2)]);
        assert!(run(&[I, I, O]).is_empty());
        assert_eq!(run(&[B, O, B, I, I]), vec![(0, 0), (2, 4)]);
        assert_eq!(run(&[B, B, I]), vec![(0, 0), (1, 2)]);
    }

    #[test]
    fn text_and_score_follow_the_span() {
        let context = "The capital is Helsinki city";
        let tokens = word_tokenize(context, Language::En);
        let labels = [O, O, O, B, I];
        let lp = Array2::from_shape_fn((5, 3), |(t, j)| -((t + j) as f64) * 0.1);
        let spans = extract_spans(&labels, lp.view(), &tokens, context, 3).unwrap();
        assert_eq!(spans.len(), 1);
        let s = &spans[0];
        assert_eq!(s.text, "Helsinki city");
        assert_eq!((s.char_start, s.char_end, s.segment), (15, 28, 3));
        assert!((s.score - (lp[[3, 1]] + lp[[4, 2]]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let tokens = word_tokenize("a b", Language::En);
        let lp = Array2::zeros((3, 3));
        assert!(extract_spans(&[O, O, O], lp.view(), &tokens, "a b", 0).is_err());
    }

    #[test]
    fn offsets_become_tokens() {
        let toks = tokens_from_offsets("x", "häme linna", &[(0, 4), (5, 10)]).unwrap();
        assert_eq!(toks[1].text, "linna");
        assert!(tokens_from_offsets("x", "abc", &[(2, 9)]).is_err());
    }
}
