//! SQuAD v1.1 exact match and token F1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::{Error, Result};

/// Which characters count as punctuation during normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// ASCII `string.punctuation`, as in the reference evaluation script.
    #[default]
    Official,
    /// Any character that is neither alphanumeric nor whitespace.
    Unicode,
}

impl Normalization {
    fn is_punct(self, c: char) -> bool {
        match self {
            Normalization::Official => c.is_ascii_punctuation(),
            Normalization::Unicode => !c.is_alphanumeric() && !c.is_whitespace(),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase, strip punctuation, drop whole-word articles, squeeze whitespace.
pub fn normalize_answer(text: &str) -> String {
    normalize_with(text, Normalization::Official)
}

pub fn normalize_with(text: &str, mode: Normalization) -> String {
    let stripped: String = text
        .to_lowercase()
        .chars()
        .filter(|&c| !mode.is_punct(c))
        .collect();

    // replace maximal word-character runs equal to an article by a space
    let mut no_articles = String::with_capacity(stripped.len());
    let mut rest = stripped.as_str();
    while let Some(c) = rest.chars().next() {
        if is_word_char(c) {
            let end = rest.find(|ch: char| !is_word_char(ch)).unwrap_or(rest.len());
            let word = &rest[..end];
            if matches!(word, "a" | "an" | "the") {
                no_articles.push(' ');
            } else {
                no_articles.push_str(word);
            }
            rest = &rest[end..];
        } else {
            no_articles.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Multiset token F1 over normalized answers. When either side normalizes to
/// nothing, F1 falls back to exact match.
pub fn f1_score(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return if pred_tokens == gold_tokens { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best (EM, F1) of `pred` against any gold answer.
pub fn best_over_golds<'a>(pred: &str, golds: impl IntoIterator<Item = &'a str>) -> (f64, f64) {
    golds.into_iter().fold((0.0_f64, 0.0_f64), |(em, f1), g| {
        (em.max(exact_match(pred, g)), f1.max(f1_score(pred, g)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub exact_match: f64,
    pub f1: f64,
    pub n_examples: usize,
    pub missing_predictions: usize,
}

/// Id → predicted answer text, the reference predictions-file layout.
pub type Predictions = BTreeMap<String, String>;

/// Dataset-level EM/F1 as percentages. Examples without a prediction score 0.
pub fn evaluate(predictions: &Predictions, examples: &[Example]) -> Result<EvalResult> {
    if examples.is_empty() {
        return Err(Error::Empty("cannot evaluate an empty example list"));
    }
    let mut em_total = 0.0;
    let mut f1_total = 0.0;
    let mut missing = 0;
    for ex in examples {
        match predictions.get(&ex.id) {
            Some(pred) => {
                let (em, f1) = best_over_golds(pred, ex.gold_texts());
                em_total += em;
                f1_total += f1;
            }
            None => missing += 1,
        }
    }
    let n = examples.len() as f64;
    Ok(EvalResult {
        exact_match: 100.0 * em_total / n,
        f1: 100.0 * f1_total / n,
        n_examples: examples.len(),
        missing_predictions: missing,
    })
}
