//! Lexical-overlap bias model, per-example bias weights and the
//! biased-example ratio.
//!
//! The bias model scores a start position by how many question content words
//! fall in the `W` tokens beginning there (and an end position by the `W`
//! tokens ending there). A weight is the bias model's probability at the gold
//! endpoints when its own decoded answer is correct, and zero otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, TokenSpan, TokenizedExample};
use crate::prob::softmax;
use crate::spanmodel::decode_span;
use crate::text::content_form;
use crate::{jsonl, Error, Result};

/// How a correct bias prediction is recognized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gating {
    /// Both endpoints of the decoded span must match one gold span.
    #[default]
    Span,
    /// Start and end are gated independently against any gold endpoint.
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub window: usize,
    pub temperature: f64,
    /// Longest span the bias model may decode.
    pub max_answer_len: usize,
    pub gating: Gating,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { window: 10, temperature: 1.0, max_answer_len: 30, gating: Gating::Span }
    }
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("bias window must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("bias temperature {} must be positive", self.temperature)));
        }
        if self.max_answer_len == 0 {
            return Err(Error::Config("bias max_answer_len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDistribution {
    pub example_id: String,
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

/// One record of a bias-weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasWeight {
    pub id: String,
    pub w_start: f64,
    pub w_end: f64,
}

impl BiasWeight {
    pub fn zero(id: impl Into<String>) -> Self {
        BiasWeight { id: id.into(), w_start: 0.0, w_end: 0.0 }
    }

    pub fn is_biased(&self) -> bool {
        self.w_start > 0.0
    }
}

/// Window counts of question content words over the context.
pub fn overlap_scores(tokenized: &TokenizedExample, window: usize) -> (Vec<f64>, Vec<f64>) {
    let question: BTreeSet<String> = tokenized
        .question_tokens
        .iter()
        .filter_map(|t| content_form(&t.text))
        .collect();
    let hits: Vec<usize> = tokenized
        .context_tokens
        .iter()
        .map(|t| content_form(&t.text).is_some_and(|w| question.contains(&w)) as usize)
        .collect();
    let n = hits.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, h) in hits.iter().enumerate() {
        prefix[i + 1] = prefix[i] + h;
    }
    let start = (0..n).map(|i| (prefix[(i + window).min(n)] - prefix[i]) as f64).collect();
    let end = (0..n)
        .map(|j| (prefix[j + 1] - prefix[(j + 1).saturating_sub(window)]) as f64)
        .collect();
    (start, end)
}

/// `softmax(score / τ)` over context positions for both endpoints.
pub fn lexical_bias_distribution(
    tokenized: &TokenizedExample,
    window: usize,
    temperature: f64,
) -> Result<BiasDistribution> {
    BiasConfig { window, temperature, ..Default::default() }.validate()?;
    let (start, end) = overlap_scores(tokenized, window);
    let scaled = |s: Vec<f64>| softmax(&s.iter().map(|x| x / temperature).collect::<Vec<_>>());
    Ok(BiasDistribution {
        example_id: tokenized.example_id.clone(),
        p_start: scaled(start),
        p_end: scaled(end),
    })
}

/// Bias weight for one example given its gold token spans.
pub fn compute_bias_weights(
    dist: &BiasDistribution,
    gold_spans: &[TokenSpan],
    max_len: usize,
    gating: Gating,
) -> Result<BiasWeight> {
    let n = dist.p_start.len();
    if dist.p_end.len() != n {
        return Err(Error::LengthMismatch { what: "bias start/end distributions", left: n, right: dist.p_end.len() });
    }
    if let Some(bad) = gold_spans.iter().find(|g| g.end >= n || g.start > g.end) {
        return Err(Error::LengthMismatch { what: "gold span end vs. context length", left: bad.end + 1, right: n });
    }
    let log = |p: &[f64]| p.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let decoded = decode_span(&log(&dist.p_start), &log(&dist.p_end), max_len)?.span;
    let mut weight = BiasWeight::zero(dist.example_id.clone());
    match gating {
        Gating::Span => {
            if let Some(g) = gold_spans.iter().find(|g| **g == decoded) {
                weight.w_start = dist.p_start[g.start];
                weight.w_end = dist.p_end[g.end];
            }
        }
        Gating::Endpoint => {
            if gold_spans.iter().any(|g| g.start == decoded.start) {
                weight.w_start = dist.p_start[decoded.start];
            }
            if gold_spans.iter().any(|g| g.end == decoded.end) {
                weight.w_end = dist.p_end[decoded.end];
            }
        }
    }
    Ok(weight)
}

/// Bias weights for a whole tokenized dataset, in input order.
pub fn bias_weights_for(tokenized: &[TokenizedExample], config: &BiasConfig) -> Result<Vec<BiasWeight>> {
    config.validate()?;
    crate::par_map(tokenized, |tok| {
        let dist = lexical_bias_distribution(tok, config.window, config.temperature)?;
        compute_bias_weights(&dist, &tok.gold_spans, config.max_answer_len, config.gating)
    })
    .into_iter()
    .collect()
}

/// Result of reading a weight file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedWeights {
    pub weights: BTreeMap<String, BiasWeight>,
    /// Records whose endpoints disagree on being zero (lenient mode only).
    pub warnings: Vec<String>,
}

fn check_weight(w: &BiasWeight, strict: bool, warnings: &mut Vec<String>) -> Result<()> {
    for (name, v) in [("w_start", w.w_start), ("w_end", w.w_end)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidData(format!("bias weight {} has {name} = {v} outside [0, 1]", w.id)));
        }
    }
    if (w.w_start > 0.0) != (w.w_end > 0.0) {
        let msg = format!(
            "bias weight {} has w_start = {} but w_end = {}; only one endpoint is gated",
            w.id, w.w_start, w.w_end
        );
        if strict {
            return Err(Error::InvalidData(msg));
        }
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(())
}

/// Parses and validates JSONL weight records.
pub fn validate_weights(records: Vec<BiasWeight>, strict: bool) -> Result<LoadedWeights> {
    let mut out = LoadedWeights::default();
    for w in records {
        check_weight(&w, strict, &mut out.warnings)?;
        if out.weights.contains_key(&w.id) {
            return Err(Error::InvalidData(format!("duplicate bias weight for {}", w.id)));
        }
        out.weights.insert(w.id.clone(), w);
    }
    Ok(out)
}

pub fn load_bias_weights(path: &Path, strict: bool) -> Result<LoadedWeights> {
    validate_weights(jsonl::read(path)?, strict)
}

pub fn write_bias_weights(path: &Path, weights: &[BiasWeight]) -> Result<()> {
    jsonl::write(path, weights)
}

/// Checks that every weight refers to an example of `examples`.
pub fn join_weights(weights: &BTreeMap<String, BiasWeight>, examples: &[Example]) -> Result<()> {
    let ids: BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    match weights.keys().find(|id| !ids.contains(id.as_str())) {
        Some(id) => Err(Error::InvalidData(format!("bias weight for {id} has no matching example"))),
        None => Ok(()),
    }
}

/// Fraction of examples with a nonzero start weight.
pub fn bias_ratio<'a, I>(weights: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a BiasWeight>,
{
    let (mut biased, mut total) = (0usize, 0usize);
    for w in weights {
        total += 1;
        biased += w.is_biased() as usize;
    }
    if total == 0 {
        return Err(Error::Empty("bias ratio of an empty weight set"));
    }
    Ok(biased as f64 / total as f64)
}

/// Per-domain percentage of biased examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasRatioReport {
    pub domains: BTreeMap<String, f64>,
}

impl BiasRatioReport {
    /// Groups `weights` by the domain of their example.
    pub fn from_weights(weights: &[BiasWeight], examples: &[Example]) -> Result<Self> {
        let domain_of: BTreeMap<&str, &str> = examples.iter().map(|e| (e.id.as_str(), e.domain.as_str())).collect();
        let mut grouped: BTreeMap<&str, Vec<&BiasWeight>> = BTreeMap::new();
        for w in weights {
            let domain = domain_of
                .get(w.id.as_str())
                .ok_or_else(|| Error::InvalidData(format!("bias weight for {} has no matching example", w.id)))?;
            grouped.entry(domain).or_default().push(w);
        }
        let mut report = BiasRatioReport::default();
        for (domain, ws) in grouped {
            report.domains.insert(domain.to_owned(), 100.0 * bias_ratio(ws)?);
        }
        Ok(report)
    }

    /// Two-row text table: domain names, then percentages.
    pub fn render(&self) -> String {
        let label_a = "Dataset";
        let label_b = "% of Biased samples";
        let cells: Vec<(String, String)> = self
            .domains
            .iter()
            .map(|(d, pct)| (d.clone(), format!("{pct:.1}%")))
            .collect();
        let first = label_a.len().max(label_b.len());
        let mut head = format!("{label_a:<first$}");
        let mut row = format!("{label_b:<first$}");
        for (name, pct) in &cells {
            let w = name.len().max(pct.len());
            let _ = write!(head, " | {name:>w$}");
            let _ = write!(row, " | {pct:>w$}");
        }
        format!("{head}\n{row}\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize_example, Answer};
    use proptest::prelude::*;

    fn example(question: &str, context: &str, answer: &str) -> TokenizedExample {
        let ex = Example {
            id: "b".into(),
            domain: "d".into(),
            adversarial: false,
            question: question.into(),
            context: context.into(),
            answers: vec![Answer { text: answer.into(), char_start: context.find(answer).unwrap() }],
        };
        tokenize_example(&ex).unwrap()
    }

    #[test]
    fn window_scores() {
        let tok = example("blue cat", "blue cat sat red dog ran", "dog");
        let (start, end) = overlap_scores(&tok, 2);
        assert_eq!(start, vec![2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(end, vec![1.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        let dist = lexical_bias_distribution(&tok, 2, 1.0).unwrap();
        assert_eq!(crate::prob::argmax(&dist.p_start), Some(0));
    }

    #[test]
    fn stopwords_do_not_count() {
        let tok = example("what is the cat ?", "the cat is here", "here");
        let (start, _) = overlap_scores(&tok, 1);
        assert_eq!(start, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_overlap_is_uniform() {
        let tok = example("blue cat", "red dog ran far", "dog");
        let dist = lexical_bias_distribution(&tok, 10, 1.0).unwrap();
        for p in [&dist.p_start, &dist.p_end] {
            assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn low_temperature_concentrates() {
        let tok = example("blue cat", "blue cat sat red dog ran", "dog");
        let dist = lexical_bias_distribution(&tok, 2, 0.01).unwrap();
        assert!(dist.p_start[0] > 0.99);
    }

    #[test]
    fn bad_parameters_rejected() {
        let tok = example("blue cat", "blue cat sat", "sat");
        assert!(lexical_bias_distribution(&tok, 0, 1.0).is_err());
        assert!(lexical_bias_distribution(&tok, 2, 0.0).is_err());
    }

    fn dist(p_start: Vec<f64>, p_end: Vec<f64>) -> BiasDistribution {
        BiasDistribution { example_id: "x".into(), p_start, p_end }
    }

    #[test]
    fn correct_bias_prediction_keeps_gold_probabilities() {
        let d = dist(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]);
        let w = compute_bias_weights(&d, &[TokenSpan::new(0, 2)], 30, Gating::Span).unwrap();
        assert_eq!((w.w_start, w.w_end), (0.7, 0.6));
    }

    #[test]
    fn wrong_bias_prediction_is_zero() {
        let d = dist(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]);
        let w = compute_bias_weights(&d, &[TokenSpan::new(1, 1)], 30, Gating::Span).unwrap();
        assert_eq!((w.w_start, w.w_end), (0.0, 0.0));
    }

    #[test]
    fn uniform_tie_break_hit() {
        let d = dist(vec![0.1; 10], vec![0.1; 10]);
        let w = compute_bias_weights(&d, &[TokenSpan::new(0, 0)], 30, Gating::Span).unwrap();
        assert!((w.w_start - 0.1).abs() < 1e-15 && (w.w_end - 0.1).abs() < 1e-15);
    }

    #[test]
    fn endpoint_gating_is_independent() {
        let d = dist(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]);
        let w = compute_bias_weights(&d, &[TokenSpan::new(0, 1)], 30, Gating::Endpoint).unwrap();
        assert_eq!((w.w_start, w.w_end), (0.7, 0.0));
    }

    #[test]
    fn mismatched_lengths_error() {
        let d = dist(vec![0.5, 0.5], vec![1.0]);
        assert!(compute_bias_weights(&d, &[TokenSpan::new(0, 0)], 30, Gating::Span).is_err());
        let d = dist(vec![0.5, 0.5], vec![0.5, 0.5]);
        assert!(compute_bias_weights(&d, &[TokenSpan::new(0, 4)], 30, Gating::Span).is_err());
    }

    #[test]
    fn weight_file_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.jsonl");
        let ws = vec![
            BiasWeight { id: "a".into(), w_start: 0.25, w_end: 0.5 },
            BiasWeight::zero("b"),
        ];
        write_bias_weights(&path, &ws).unwrap();
        let loaded = load_bias_weights(&path, true).unwrap();
        assert_eq!(loaded.weights.values().cloned().collect::<Vec<_>>(), ws);

        let out_of_range = vec![BiasWeight { id: "a".into(), w_start: 1.2, w_end: 0.5 }];
        assert!(validate_weights(out_of_range, false).is_err());
        let dup = vec![BiasWeight::zero("a"), BiasWeight::zero("a")];
        assert!(validate_weights(dup, false).is_err());

        let one_sided = vec![BiasWeight { id: "a".into(), w_start: 0.3, w_end: 0.0 }];
        assert_eq!(validate_weights(one_sided.clone(), false).unwrap().warnings.len(), 1);
        assert!(validate_weights(one_sided, true).is_err());
    }

    #[test]
    fn join_requires_known_ids() {
        let ex = Example {
            id: "a".into(),
            domain: "d".into(),
            adversarial: false,
            question: "q".into(),
            context: "c".into(),
            answers: vec![Answer { text: "c".into(), char_start: 0 }],
        };
        let mut weights = BTreeMap::new();
        weights.insert("a".to_string(), BiasWeight::zero("a"));
        assert!(join_weights(&weights, std::slice::from_ref(&ex)).is_ok());
        weights.insert("z".to_string(), BiasWeight::zero("z"));
        assert!(join_weights(&weights, &[ex]).is_err());
    }

    #[test]
    fn ratio_counts_nonzero_starts() {
        let mut ws: Vec<BiasWeight> = (0..4)
            .map(|i| BiasWeight { id: i.to_string(), w_start: 0.5, w_end: 0.5 })
            .collect();
        ws[2] = BiasWeight::zero("2");
        assert_eq!(bias_ratio(&ws).unwrap(), 0.75);
        let zeros: Vec<BiasWeight> = (0..3).map(|i| BiasWeight::zero(i.to_string())).collect();
        assert_eq!(bias_ratio(&zeros).unwrap(), 0.0);
        assert!(bias_ratio(&[]).is_err());
    }

    #[test]
    fn ratio_report_layout() {
        let mut report = BiasRatioReport::default();
        for (d, v) in [("SQuAD", 61.9), ("HotpotQA", 74.5), ("TriviaQA", 58.1), ("NewsQA", 31.8), ("NQ", 64.8)] {
            report.domains.insert(d.into(), v);
        }
        let text = report.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Dataset"));
        assert!(lines[1].starts_with("% of Biased samples"));
        for pct in ["61.9%", "74.5%", "58.1%", "31.8%", "64.8%"] {
            assert!(lines[1].contains(pct));
        }
        assert_eq!(lines[0].len(), lines[1].len());
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(
            words in prop::collection::vec(0usize..6, 1..40),
            window in 1usize..12,
            tau in 0.05f64..5.0,
        ) {
            const POOL: [&str; 6] = ["alpha", "beta", "gamma", "the", "delta", "omega"];
            let context: Vec<&str> = words.iter().map(|&w| POOL[w]).collect();
            let context = context.join(" ");
            let tok = example("alpha beta the", &context, &context[..context.find(' ').unwrap_or(context.len())]);
            let d = lexical_bias_distribution(&tok, window, tau).unwrap();
            prop_assert!(crate::prob::is_distribution(&d.p_start, 1e-9));
            prop_assert!(crate::prob::is_distribution(&d.p_end, 1e-9));
            prop_assert_eq!(d.clone(), lexical_bias_distribution(&tok, window, tau).unwrap());
        }
    }
}
