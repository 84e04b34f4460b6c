//! Rule-based error taxonomy and error-reduction bookkeeping.
//!
//! Rules, first match wins:
//! 1. NUMERICAL when a gold answer or the prediction contains a digit;
//! 2. LEXICAL when at least `θ` of the question's content words reappear in
//!    the sentence holding the prediction;
//! 3. ENTITY when a multi-word capitalized mention from the question is
//!    missing from that sentence;
//! 4. OTHER.
//!
//! A prediction that cannot be found in the context is filed as OTHER.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_example, Example, OwnedToken, TokenizedExample};
use crate::metrics::{best_over_golds, Predictions};
use crate::text::{content_set, is_capitalized};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Lexical,
    Numerical,
    Entity,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Lexical, Category::Numerical, Category::Entity, Category::Other];

    /// Row label in the distribution table.
    pub fn long_name(self) -> &'static str {
        match self {
            Category::Lexical => "Lexical bias",
            Category::Numerical => "Numerical reasoning errors",
            Category::Entity => "Entity recognition and disambiguation errors",
            Category::Other => "Other",
        }
    }

    /// Row label in the reduction table.
    pub fn short_name(self) -> &'static str {
        match self {
            Category::Entity => "Entity recognition errors",
            other => other.long_name(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Lexical => "LEXICAL",
            Category::Numerical => "NUMERICAL",
            Category::Entity => "ENTITY",
            Category::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Numerical,
    Lexical,
    Entity,
    Fallback,
    Unlocatable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Minimum share of question content words found in the prediction's sentence.
    pub lexical_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { lexical_threshold: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub id: String,
    pub category: Category,
    pub rule_fired: Rule,
    pub question: String,
    pub prediction: String,
    pub gold: Vec<String>,
    /// Context sentence holding the prediction's first occurrence.
    pub sentence: Option<usize>,
}

/// Sentence index of the first occurrence of `prediction` in the context.
fn locate(example: &Example, tokenized: &TokenizedExample, prediction: &str) -> Option<usize> {
    if prediction.trim().is_empty() {
        return None;
    }
    let byte = example.context.find(prediction)?;
    let char_start = example.context[..byte].chars().count();
    let token = tokenized.context_tokens.iter().position(|t| t.char_end > char_start)?;
    tokenized.sentence_of(token)
}

/// Runs of two or more consecutive capitalized question tokens, ignoring
/// the question's first token.
pub fn entity_mentions(question: &[OwnedToken]) -> Vec<Vec<String>> {
    let mut mentions = Vec::new();
    let mut run: Vec<String> = Vec::new();
    for (i, tok) in question.iter().enumerate() {
        if i > 0 && is_capitalized(&tok.text) {
            run.push(tok.text.to_lowercase());
            continue;
        }
        if run.len() >= 2 {
            mentions.push(std::mem::take(&mut run));
        }
        run.clear();
    }
    if run.len() >= 2 {
        mentions.push(run);
    }
    mentions
}

fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Classifies one wrong prediction.
pub fn categorize_error(
    example: &Example,
    tokenized: &TokenizedExample,
    prediction: &str,
    config: &AnalysisConfig,
) -> ErrorRecord {
    let mut record = ErrorRecord {
        id: example.id.clone(),
        category: Category::Other,
        rule_fired: Rule::Unlocatable,
        question: example.question.clone(),
        prediction: prediction.to_owned(),
        gold: example.gold_texts().map(str::to_owned).collect(),
        sentence: locate(example, tokenized, prediction),
    };
    let Some(sentence) = record.sentence else {
        return record;
    };
    let has_digit = |s: &str| s.chars().any(|c| c.is_ascii_digit());
    let (category, rule) = if record.gold.iter().any(|g| has_digit(g)) || has_digit(prediction) {
        (Category::Numerical, Rule::Numerical)
    } else {
        let bounds = tokenized.sentence_bounds[sentence];
        let sentence_tokens = &tokenized.context_tokens[bounds.start..=bounds.end];
        let question_words = content_set(tokenized.question_tokens.iter().map(|t| t.text.as_str()));
        let sentence_words = content_set(sentence_tokens.iter().map(|t| t.text.as_str()));
        let overlap = question_words.intersection(&sentence_words).count();
        let lowered: Vec<String> = sentence_tokens.iter().map(|t| t.text.to_lowercase()).collect();
        if !question_words.is_empty() && overlap as f64 / question_words.len() as f64 >= config.lexical_threshold {
            (Category::Lexical, Rule::Lexical)
        } else if entity_mentions(&tokenized.question_tokens)
            .iter()
            .any(|m| !contains_sequence(&lowered, m))
        {
            (Category::Entity, Rule::Entity)
        } else {
            (Category::Other, Rule::Fallback)
        }
    };
    record.category = category;
    record.rule_fired = rule;
    record
}

fn exact(example: &Example, prediction: &str) -> bool {
    best_over_golds(prediction, example.gold_texts()).0 == 1.0
}

/// Error records for every example whose prediction scores EM 0. Missing
/// predictions count as empty answers.
pub fn collect_errors(
    examples: &[Example],
    predictions: &Predictions,
    config: &AnalysisConfig,
) -> Result<Vec<ErrorRecord>> {
    let mut out = Vec::new();
    for ex in examples {
        let pred = predictions.get(&ex.id).map(String::as_str).unwrap_or("");
        if !exact(ex, pred) {
            out.push(categorize_error(ex, &tokenize_example(ex)?, pred, config));
        }
    }
    Ok(out)
}

/// Error counts per category with shares of the total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub counts: BTreeMap<Category, usize>,
    pub total: usize,
}

impl ErrorDistribution {
    pub fn from_counts(counts: &[(Category, usize)]) -> Self {
        let mut dist = ErrorDistribution::default();
        for c in Category::ALL {
            dist.counts.insert(c, 0);
        }
        for &(c, n) in counts {
            *dist.counts.entry(c).or_default() += n;
            dist.total += n;
        }
        dist
    }

    pub fn count(&self, category: Category) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    pub fn percentage(&self, category: Category) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count(category) as f64 / self.total as f64
        }
    }

    /// Text table: error type, number of errors, percentage.
    pub fn render(&self) -> String {
        let mut rows: Vec<[String; 3]> = vec![["Error Type".into(), "Number of Errors".into(), "Percentage".into()]];
        for c in Category::ALL {
            if c == Category::Other && self.count(c) == 0 {
                continue;
            }
            rows.push([c.long_name().into(), self.count(c).to_string(), compact_percent(self.percentage(c))]);
        }
        let total_pct = if self.total == 0 { 0.0 } else { 100.0 };
        rows.push(["Total".into(), self.total.to_string(), compact_percent(total_pct)]);
        render_table(&rows)
    }
}

pub fn error_distribution(records: &[ErrorRecord]) -> ErrorDistribution {
    let counts: Vec<(Category, usize)> = records.iter().map(|r| (r.category, 1)).collect();
    ErrorDistribution::from_counts(&counts)
}

/// `61%` for whole numbers, one decimal otherwise.
fn compact_percent(v: f64) -> String {
    let rounded = (v * 10.0).round() / 10.0;
    if rounded.fract() == 0.0 {
        format!("{rounded:.0}%")
    } else {
        format!("{rounded:.1}%")
    }
}

fn render_table(rows: &[[String; 3]]) -> String {
    let mut widths = [0usize; 3];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        let _ = writeln!(out, "{:<a$} | {:>b$} | {:>c$}", row[0], row[1], row[2], a = widths[0], b = widths[1], c = widths[2]);
        if r == 0 || r == rows.len() - 2 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 6));
        }
    }
    out
}

/// One row of the reduction table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub baseline_errors: usize,
    pub corrected: usize,
    /// Baseline errors the debiased model still gets wrong.
    pub still_wrong: usize,
    /// Baseline successes the debiased model gets wrong, filed by the
    /// debiased prediction's category.
    pub regressed: usize,
}

impl ReductionRow {
    pub fn reduction_pct(&self) -> f64 {
        if self.baseline_errors == 0 {
            0.0
        } else {
            100.0 * self.corrected as f64 / self.baseline_errors as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rows: BTreeMap<Category, ReductionRow>,
}

impl ReductionReport {
    /// From `(category, baseline errors, corrected)` triples.
    pub fn from_counts(counts: &[(Category, usize, usize)]) -> Self {
        let mut report = ReductionReport::default();
        for &(c, baseline, corrected) in counts {
            let row = report.rows.entry(c).or_default();
            row.baseline_errors += baseline;
            row.corrected += corrected;
            row.still_wrong += baseline.saturating_sub(corrected);
        }
        report
    }

    pub fn row(&self, category: Category) -> ReductionRow {
        self.rows.get(&category).cloned().unwrap_or_default()
    }

    /// Column sums over categories.
    pub fn total(&self) -> ReductionRow {
        self.rows.values().fold(ReductionRow::default(), |mut acc, r| {
            acc.baseline_errors += r.baseline_errors;
            acc.corrected += r.corrected;
            acc.still_wrong += r.still_wrong;
            acc.regressed += r.regressed;
            acc
        })
    }

    /// Text table: error type, baseline errors, errors corrected, reduction.
    pub fn render(&self) -> String {
        let header = ["Error type", "Baseline errors", "Errors corrected", "Reduction (%)"];
        let mut rows: Vec<[String; 4]> = vec![header.map(String::from)];
        for c in Category::ALL {
            let row = self.row(c);
            if c == Category::Other && row.baseline_errors == 0 {
                continue;
            }
            rows.push(reduction_cells(c.short_name(), &row));
        }
        rows.push(reduction_cells("Total", &self.total()));

        let mut widths = [0usize; 4];
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for (r, row) in rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<a$} | {:>b$} | {:>c$} | {:>d$}",
                row[0],
                row[1],
                row[2],
                row[3],
                a = widths[0],
                b = widths[1],
                c = widths[2],
                d = widths[3]
            );
            if r == 0 || r == rows.len() - 2 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 9));
            }
        }
        out
    }
}

fn reduction_cells(label: &str, row: &ReductionRow) -> [String; 4] {
    [
        label.to_owned(),
        row.baseline_errors.to_string(),
        row.corrected.to_string(),
        format!("{:.1}%", row.reduction_pct()),
    ]
}

/// Compares two prediction sets on the same examples.
pub fn error_reduction_report(
    examples: &[Example],
    baseline: &Predictions,
    debiased: &Predictions,
    config: &AnalysisConfig,
) -> Result<ReductionReport> {
    let mut report = ReductionReport::default();
    let get = |preds: &Predictions, id: &str| preds.get(id).cloned().unwrap_or_default();
    for ex in examples {
        let (before, after) = (get(baseline, &ex.id), get(debiased, &ex.id));
        let (was_right, is_right) = (exact(ex, &before), exact(ex, &after));
        if was_right && is_right {
            continue;
        }
        let tokenized = tokenize_example(ex)?;
        if !was_right {
            let row = report.rows.entry(categorize_error(ex, &tokenized, &before, config).category).or_default();
            row.baseline_errors += 1;
            if is_right {
                row.corrected += 1;
            } else {
                row.still_wrong += 1;
            }
        } else {
            report.rows.entry(categorize_error(ex, &tokenized, &after, config).category).or_default().regressed += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Answer;

    fn example(id: &str, question: &str, context: &str, gold: &str) -> Example {
        Example {
            id: id.into(),
            domain: "d".into(),
            adversarial: true,
            question: question.into(),
            context: context.into(),
            answers: vec![Answer { text: gold.into(), char_start: context.find(gold).unwrap() }],
        }
    }

    fn classify(ex: &Example, pred: &str) -> ErrorRecord {
        categorize_error(ex, &tokenize_example(ex).unwrap(), pred, &AnalysisConfig::default())
    }

    fn worked_examples() -> Vec<(Example, &'static str)> {
        vec![
            (
                example(
                    "chicago",
                    "Where did Super Bowl 50 take place?",
                    "Super Bowl 50 was played at Levi's Stadium in Santa Clara, California. Champ Bowl 40 took place in Chicago.",
                    "Santa Clara, California",
                ),
                "Chicago",
            ),
            (
                example(
                    "ratio",
                    "What was the win/loss ratio in 2015 for the Carolina Panthers during their regular season?",
                    "The Panthers finished the 2015 regular season with a 15-1 record. The 2020 regular season win/loss ratio for the Michigan Vikings was 656.",
                    "15-1",
                ),
                "656",
            ),
            (
                example(
                    "hamster",
                    "What position does Von Miller play?",
                    "Von Miller plays linebacker for the Broncos. Otto Baker plays the position of hamster.",
                    "linebacker",
                ),
                "hamster",
            ),
            (
                example(
                    "stark",
                    "Who won Super Bowl 50?",
                    "The Denver Broncos defeated the Carolina Panthers. Stark Industries won Champ Bowl 40.",
                    "Denver Broncos",
                ),
                "Stark Industries",
            ),
            (
                example(
                    "yards",
                    "What was Ronnie Hillman's average yards per carry in 2015?",
                    "Hillman ran for 863 yards and a 4.7 yards per carry average. Boyd Holman's average yards per carry in 2020 was 9.7.",
                    "4.7",
                ),
                "9.7",
            ),
        ]
    }

    #[test]
    fn worked_examples_classify_as_labelled() {
        let got: Vec<Category> = worked_examples().iter().map(|(ex, p)| classify(ex, p).category).collect();
        use Category::*;
        assert_eq!(got, vec![Lexical, Numerical, Entity, Lexical, Numerical]);
    }

    #[test]
    fn rule_precedence_and_fallbacks() {
        let ex = example("x", "Who built the tower?", "Anna built the tower. Bob sang.", "Anna");
        let r = classify(&ex, "Bob");
        assert_eq!((r.category, r.rule_fired), (Category::Other, Rule::Fallback));
        assert_eq!(r.sentence, Some(1));
        let r = classify(&ex, "Zed");
        assert_eq!((r.category, r.rule_fired, r.sentence), (Category::Other, Rule::Unlocatable, None));
        let r = classify(&ex, "");
        assert_eq!(r.rule_fired, Rule::Unlocatable);
    }

    #[test]
    fn sentence_initial_capital_is_not_an_entity() {
        let toks = tokenize_example(&example("x", "Where is Mount Everest Base?", "Nepal .", "Nepal")).unwrap();
        assert_eq!(entity_mentions(&toks.question_tokens), vec![vec!["mount", "everest", "base"]]);
        let toks = tokenize_example(&example("x", "Paris is where?", "Nepal .", "Nepal")).unwrap();
        assert!(entity_mentions(&toks.question_tokens).is_empty());
    }

    #[test]
    fn distribution_counts() {
        let ex = example("x", "q", "c", "c");
        let mut rec = classify(&ex, "c");
        let mut records = Vec::new();
        for c in [Category::Lexical, Category::Lexical, Category::Numerical, Category::Other] {
            rec.category = c;
            records.push(rec.clone());
        }
        let d = error_distribution(&records);
        assert_eq!(
            Category::ALL.map(|c| d.percentage(c)),
            [50.0, 25.0, 0.0, 25.0]
        );
        let empty = error_distribution(&[]);
        assert_eq!(empty.total, 0);
        assert!(Category::ALL.iter().all(|&c| empty.count(c) == 0 && empty.percentage(c) == 0.0));
    }

    #[test]
    fn distribution_table_shape() {
        let d = ErrorDistribution::from_counts(&[(Category::Lexical, 61), (Category::Numerical, 25), (Category::Entity, 14)]);
        let text = d.render();
        assert!(text.contains("Lexical bias"), "{text}");
        for line in ["| 61 |  61%", "| 25 |  25%", "| 14 |  14%", "| 100 | 100%"] {
            let squeezed: String = line.split_whitespace().collect::<Vec<_>>().join(" ");
            let any = text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>().join(" ").contains(&squeezed));
            assert!(any, "missing {line} in\n{text}");
        }
        assert!(!text.contains("Other"));
    }

    #[test]
    fn reduction_report_bookkeeping() {
        let cases = worked_examples();
        let examples: Vec<Example> = cases.iter().map(|(e, _)| e.clone()).collect();
        let baseline: Predictions = cases.iter().map(|(e, p)| (e.id.clone(), p.to_string())).collect();
        let cfg = AnalysisConfig::default();

        let same = error_reduction_report(&examples, &baseline, &baseline, &cfg).unwrap();
        assert_eq!(same.total().corrected, 0);
        assert_eq!(same.total().regressed, 0);
        assert_eq!(same.total().baseline_errors, 5);

        // fix the lexical "stark" error, break nothing else
        let mut debiased = baseline.clone();
        debiased.insert("stark".into(), "Denver Broncos".into());
        let r = error_reduction_report(&examples, &baseline, &debiased, &cfg).unwrap();
        assert_eq!(r.row(Category::Lexical).corrected, 1);
        assert_eq!(r.total().corrected, 1);
        for c in Category::ALL {
            let row = r.row(c);
            assert_eq!(row.corrected + row.still_wrong, row.baseline_errors);
        }

        // an example the baseline got right that the debiased model breaks
        let mut with_right = examples.clone();
        with_right.push(example("ok", "Who won the game?", "Alpha won the game. Beta lost.", "Alpha"));
        let mut base2 = baseline.clone();
        base2.insert("ok".into(), "Alpha".into());
        let mut deb2 = debiased.clone();
        deb2.insert("ok".into(), "Beta".into());
        let r = error_reduction_report(&with_right, &base2, &deb2, &cfg).unwrap();
        assert_eq!((r.total().corrected, r.total().regressed), (1, 1));
        assert_eq!(r.total().baseline_errors, 5);
    }

    #[test]
    fn reduction_report_is_order_invariant() {
        let cases = worked_examples();
        let mut examples: Vec<Example> = cases.iter().map(|(e, _)| e.clone()).collect();
        let baseline: Predictions = cases.iter().map(|(e, p)| (e.id.clone(), p.to_string())).collect();
        let mut debiased = baseline.clone();
        debiased.insert("yards".into(), "4.7".into());
        let cfg = AnalysisConfig::default();
        let a = error_reduction_report(&examples, &baseline, &debiased, &cfg).unwrap();
        examples.reverse();
        let b = error_reduction_report(&examples, &baseline, &debiased, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_reduction_rows_render() {
        let r = ReductionReport::from_counts(&[
            (Category::Lexical, 61, 4),
            (Category::Numerical, 25, 3),
            (Category::Entity, 14, 0),
        ]);
        let text = r.render();
        let rows: Vec<Vec<String>> = text
            .lines()
            .filter(|l| l.contains('|'))
            .map(|l| l.split('|').map(|c| c.trim().to_string()).collect())
            .collect();
        assert_eq!(rows[0], ["Error type", "Baseline errors", "Errors corrected", "Reduction (%)"]);
        assert_eq!(rows[1], ["Lexical bias", "61", "4", "6.6%"]);
        assert_eq!(rows[2], ["Numerical reasoning errors", "25", "3", "12.0%"]);
        assert_eq!(rows[3], ["Entity recognition errors", "14", "0", "0.0%"]);
        assert_eq!(rows[4], ["Total", "100", "7", "7.0%"]);
    }

    #[test]
    fn missing_predictions_count_as_errors() {
        let cases = worked_examples();
        let examples: Vec<Example> = cases.iter().map(|(e, _)| e.clone()).collect();
        let errors = collect_errors(&examples, &Predictions::new(), &AnalysisConfig::default()).unwrap();
        assert_eq!(errors.len(), 5);
        assert!(errors.iter().all(|e| e.rule_fired == Rule::Unlocatable && e.category == Category::Other));
    }
}
