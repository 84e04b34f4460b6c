//! wasm-bindgen wrappers used by `www/index.html`. Structured results are
//! returned as JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qadebias::analysis::{categorize_error, AnalysisConfig};
use qadebias::bias::lexical_bias_distribution;
use qadebias::corpus::{split_sentences, tokenize, tokenize_example, Answer, Example, OwnedToken, TokenizedExample};
use qadebias::distill::smooth_distribution;
use qadebias::spanmodel::decode_span;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Smooths `p` with exponent `1 - beta`; `p` need not be normalized.
#[wasm_bindgen]
pub fn smooth(p: Vec<f64>, beta: f64) -> Result<Vec<f64>, JsError> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|x| *x < 0.0 || !x.is_finite()) || total <= 0.0 {
        return Err(js_err("weights must be non-negative with a positive sum"));
    }
    let p: Vec<f64> = p.iter().map(|x| x / total).collect();
    smooth_distribution(&p, beta).map_err(js_err)
}

#[derive(Serialize)]
struct Heatmap {
    tokens: Vec<String>,
    p_start: Vec<f64>,
    p_end: Vec<f64>,
    /// Inclusive token span the bias model would answer with.
    span: [usize; 2],
}

fn owned(text: &str) -> Vec<OwnedToken> {
    tokenize(text).into_iter().map(OwnedToken::from).collect()
}

pub fn heatmap(question: &str, context: &str, window: usize, temperature: f64, max_len: usize) -> qadebias::Result<String> {
    let context_tokens = owned(context);
    let tokenized = TokenizedExample {
        example_id: "demo".into(),
        question_tokens: owned(question),
        sentence_bounds: split_sentences(&context_tokens),
        context_tokens,
        gold_spans: Vec::new(),
    };
    if tokenized.context_tokens.is_empty() {
        return Err(qadebias::Error::Empty("context has no tokens"));
    }
    let dist = lexical_bias_distribution(&tokenized, window, temperature)?;
    let ln = |p: &[f64]| p.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let span = decode_span(&ln(&dist.p_start), &ln(&dist.p_end), max_len.max(1))?.span;
    let out = Heatmap {
        tokens: tokenized.context_tokens.into_iter().map(|t| t.text).collect(),
        p_start: dist.p_start,
        p_end: dist.p_end,
        span: [span.start, span.end],
    };
    Ok(serde_json::to_string(&out).expect("heatmap serializes"))
}

/// Lexical-overlap bias distributions over the context tokens.
#[wasm_bindgen]
pub fn bias_heatmap(question: &str, context: &str, window: usize, temperature: f64, max_len: usize) -> Result<String, JsError> {
    heatmap(question, context, window, temperature, max_len).map_err(js_err)
}

pub fn classify(question: &str, context: &str, gold: &str, prediction: &str, theta: f64) -> qadebias::Result<String> {
    let char_start = context
        .find(gold)
        .map(|byte| context[..byte].chars().count())
        .ok_or_else(|| qadebias::Error::InvalidData("the gold answer must appear in the context".into()))?;
    let example = Example {
        id: "demo".into(),
        domain: "demo".into(),
        adversarial: false,
        question: question.into(),
        context: context.into(),
        answers: vec![Answer { text: gold.into(), char_start }],
    };
    let tokenized = tokenize_example(&example)?;
    let record = categorize_error(&example, &tokenized, prediction, &AnalysisConfig { lexical_threshold: theta });
    Ok(serde_json::to_string(&record).expect("record serializes"))
}

/// Error category for a wrong prediction, as an error-record JSON object.
#[wasm_bindgen]
pub fn classify_error(question: &str, context: &str, gold: &str, prediction: &str, theta: f64) -> Result<String, JsError> {
    classify(question, context, gold, prediction, theta).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_peaks_near_question_words() {
        let json = heatmap("Who plays linebacker?", "Otto sang . Von Miller plays linebacker .", 3, 0.5, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let tokens = v["tokens"].as_array().unwrap();
        assert_eq!(tokens.len(), 8);
        let start = v["span"][0].as_u64().unwrap() as usize;
        assert!(start >= 3, "{json}");
    }

    #[test]
    fn classify_reports_category() {
        let json = classify(
            "What position does Von Miller play?",
            "Von Miller plays linebacker for the Broncos. Otto Baker plays the position of hamster.",
            "linebacker",
            "hamster",
            0.3,
        )
        .unwrap();
        assert!(json.contains("\"category\":\"ENTITY\""), "{json}");
        assert!(classify("q", "context", "absent", "x", 0.3).is_err());
    }
}
