use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{decode, extract_spans, tokens_from_offsets, AnswerSpan, LegalityConfig, TaggerError, TaggerModel};
use crate::features::ContextVectorSet;
use crate::labels::IobLabel;

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answerable: bool,
    pub answer_text: Option<String>,
    pub char_start: Option<usize>,
    pub char_end: Option<usize>,
    pub score: Option<f64>,
    pub labels_per_segment: Vec<Vec<IobLabel>>,
}

impl Prediction {
    pub fn answer_text(&self) -> Option<&str> {
        self.answer_text.as_deref()
    }
}

/// Highest-scoring span after merging duplicates that share a character
/// range. Equal scores go to the earlier span.
pub fn select_answer(spans: Vec<AnswerSpan>) -> Option<AnswerSpan> {
    let mut unique: Vec<AnswerSpan> = Vec::new();
    for span in spans {
        match unique
            .iter_mut()
            .find(|u| (u.char_start, u.char_end) == (span.char_start, span.char_end))
        {
            Some(u) if span.score > u.score => *u = span,
            Some(_) => {}
            None => unique.push(span),
        }
    }
    unique.into_iter().reduce(|best, s| {
        let better = s.score > best.score
            || s.score == best.score && (s.char_start, s.segment) < (best.char_start, best.segment);
        if better {
            s
        } else {
            best
        }
    })
}

/// Decodes every segment of one sample, extracts spans per segment (spans
/// never cross segments) and picks the best. No `B` anywhere means
/// unanswerable.
pub fn answer(
    sample_id: &str,
    context: &str,
    model: &TaggerModel,
    segments: &[ContextVectorSet],
    k: usize,
    constraints: &LegalityConfig,
) -> Result<Prediction, TaggerError> {
    let mut spans = Vec::new();
    let mut labels_per_segment = Vec::with_capacity(segments.len());
    for (i, set) in segments.iter().enumerate() {
        let tokens = tokens_from_offsets(sample_id, context, &set.token_offsets)?;
        let lp = model.log_probs(set.pooled_f64().view(), set.token_vectors_f64().view())?;
        let labels = decode(lp.view(), k, constraints)?;
        spans.extend(extract_spans(&labels, lp.view(), &tokens, context, i)?);
        labels_per_segment.push(labels);
    }
    Ok(match select_answer(spans) {
        Some(best) => Prediction {
            id: sample_id.to_string(),
            answerable: true,
            answer_text: Some(best.text),
            char_start: Some(best.char_start),
            char_end: Some(best.char_end),
            score: Some(best.score),
            labels_per_segment,
        },
        None => Prediction {
            id: sample_id.to_string(),
            answerable: false,
            answer_text: None,
            char_start: None,
            char_end: None,
            score: None,
            labels_per_segment,
        },
    })
}

pub fn write_predictions(mut out: impl Write, predictions: &[Prediction]) -> Result<(), TaggerError> {
    for p in predictions {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
