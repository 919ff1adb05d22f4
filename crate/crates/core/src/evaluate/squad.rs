use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tokenization::{is_punctuation, Language};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquadScore {
    pub f1: f64,
    pub exact: f64,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, drop punctuation, drop English articles, collapse whitespace.
pub fn normalize_answer(text: &str, language: Language) -> String {
    let lowered: String = text.to_lowercase().chars().filter(|c| !is_punctuation(*c)).collect();
    lowered
        .split_whitespace()
        .filter(|w| language != Language::En || !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

fn answer_tokens(normalized: &str, language: Language) -> Vec<String> {
    match language {
        Language::Ja => normalized
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
        _ => normalized.split_whitespace().map(String::from).collect(),
    }
}

/// SQuAD v2 answer scoring. `None` stands for "unanswerable"; agreeing on
/// that scores 1, disagreeing scores 0.
pub fn squad_v2(predicted: Option<&str>, gold: Option<&str>, language: Language) -> SquadScore {
    let (p, g) = match (predicted, gold) {
        (None, None) => return SquadScore { f1: 1.0, exact: 1.0 },
        (Some(_), None) | (None, Some(_)) => return SquadScore { f1: 0.0, exact: 0.0 },
        (Some(p), Some(g)) => (normalize_answer(p, language), normalize_answer(g, language)),
    };
    let exact = if p == g { 1.0 } else { 0.0 };
    let pt = answer_tokens(&p, language);
    let gt = answer_tokens(&g, language);
    if pt.is_empty() || gt.is_empty() {
        let same = if pt == gt { 1.0 } else { 0.0 };
        return SquadScore { f1: same, exact };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &pt {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return SquadScore { f1: 0.0, exact };
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    SquadScore {
        f1: 2.0 * precision * recall / (precision + recall),
        exact,
    }
}

/// Mean of `f1` and `exact` over `scores`; zeros when empty.
pub fn mean_squad(scores: &[SquadScore]) -> SquadScore {
    if scores.is_empty() {
        return SquadScore { f1: 0.0, exact: 0.0 };
    }
    let n = scores.len() as f64;
    SquadScore {
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        exact: scores.iter().map(|s| s.exact).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_answers() {
        assert_eq!(
            squad_v2(Some("Helsinki"), Some("Helsinki"), Language::Fi),
            SquadScore { f1: 1.0, exact: 1.0 }
        );
    }

    #[test]
    fn partial_overlap() {
        let s = squad_v2(Some("in Helsinki"), Some("Helsinki"), Language::En);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.exact, 0.0);
    }

    #[test]
    fn unanswerable_agreement_and_disagreement() {
        assert_eq!(squad_v2(None, None, Language::En), SquadScore { f1: 1.0, exact: 1.0 });
        assert_eq!(
            squad_v2(Some("x"), None, Language::En),
            SquadScore { f1: 0.0, exact: 0.0 }
        );
        assert_eq!(
            squad_v2(None, Some("x"), Language::En),
            SquadScore { f1: 0.0, exact: 0.0 }
        );
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_answer("The  Capital, of Finland!", Language::En),
            "capital of finland"
        );
        assert_eq!(normalize_answer("The Capital", Language::Fi), "the capital");
        assert_eq!(
            squad_v2(Some("the Helsinki."), Some("helsinki"), Language::En).exact,
            1.0
        );
    }

    #[test]
    fn japanese_scores_per_character() {
        let s = squad_v2(Some("東京都"), Some("東京"), Language::Ja);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn punctuation_only_answers() {
        assert_eq!(squad_v2(Some("..."), Some("!"), Language::En).f1, 1.0);
        assert_eq!(squad_v2(Some("..."), Some("x"), Language::En).f1, 0.0);
    }
}
