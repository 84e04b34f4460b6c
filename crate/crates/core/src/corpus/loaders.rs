use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{char_slice, Answer, Example};
use crate::{jsonl, Error, Result};

/// Caller-side settings for dataset ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub domain: String,
    pub adversarial: bool,
    /// Abort on the first invalid example instead of rejecting it.
    pub strict: bool,
}

impl LoadOptions {
    pub fn new(domain: impl Into<String>) -> Self {
        LoadOptions {
            domain: domain.into(),
            adversarial: false,
            strict: false,
        }
    }

    pub fn adversarial(mut self, adversarial: bool) -> Self {
        self.adversarial = adversarial;
        self
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub examples: Vec<Example>,
    pub rejected: Vec<Rejection>,
}

impl LoadReport {
    fn admit(&mut self, example: Example, seen: &mut HashSet<String>, strict: bool) -> Result<()> {
        let verdict = if !seen.insert(example.id.clone()) {
            Err(Error::InvalidData(format!("duplicate id {}", example.id)))
        } else {
            example.validate()
        };
        match verdict {
            Ok(()) => {
                self.examples.push(example);
                Ok(())
            }
            Err(e) if strict => Err(e),
            Err(e) => {
                log::warn!("rejecting example {}: {e}", example.id);
                self.rejected.push(Rejection {
                    id: example.id,
                    reason: e.to_string(),
                });
                Ok(())
            }
        }
    }
}

#[derive(Deserialize)]
struct SquadFile {
    #[allow(dead_code)]
    #[serde(default)]
    version: Option<String>,
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[allow(dead_code)]
    #[serde(default)]
    title: Option<String>,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Loads a SQuAD v1.1-structured file (also AddSent / AddOneSent).
pub fn load_squad_json(path: &Path, opts: &LoadOptions) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_squad_str(&text, opts).map_err(|e| match e {
        Error::Json { source, .. } => Error::json(path.display().to_string(), source),
        other => other,
    })
}

pub fn parse_squad_str(text: &str, opts: &LoadOptions) -> Result<LoadReport> {
    let file: SquadFile = serde_json::from_str(text).map_err(|e| Error::json("SQuAD file", e))?;
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for article in file.data {
        for paragraph in article.paragraphs {
            for qa in paragraph.qas {
                let example = Example {
                    id: qa.id,
                    domain: opts.domain.clone(),
                    adversarial: opts.adversarial,
                    question: qa.question,
                    context: paragraph.context.clone(),
                    answers: qa
                        .answers
                        .into_iter()
                        .map(|a| Answer {
                            text: a.text,
                            char_start: a.answer_start,
                        })
                        .collect(),
                };
                report.admit(example, &mut seen, opts.strict)?;
            }
        }
    }
    Ok(report)
}

#[derive(Deserialize)]
struct MrqaHeader {
    #[allow(dead_code)]
    header: serde_json::Value,
}

#[derive(Deserialize)]
struct MrqaContext {
    context: String,
    qas: Vec<MrqaQa>,
}

#[derive(Deserialize)]
struct MrqaQa {
    qid: String,
    question: String,
    #[serde(default)]
    detected_answers: Vec<MrqaDetected>,
}

#[derive(Deserialize)]
struct MrqaDetected {
    #[allow(dead_code)]
    text: String,
    char_spans: Vec<[usize; 2]>,
}

/// Loads an MRQA-format JSONL file. Every character span of every detected
/// answer becomes one gold answer; the first span of the first detected
/// answer comes first. Answer text is read from the context at the span.
pub fn load_mrqa_jsonl(path: &Path, opts: &LoadOptions) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mrqa_lines(&text, opts)
}

pub fn parse_mrqa_lines(text: &str, opts: &LoadOptions) -> Result<LoadReport> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidData("MRQA file is empty (header missing)".into()))?;
    serde_json::from_str::<MrqaHeader>(header)
        .map_err(|e| Error::json("MRQA header line", e))?;

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (lineno, line) in lines {
        let record: MrqaContext = serde_json::from_str(line)
            .map_err(|e| Error::json(format!("MRQA line {}", lineno + 1), e))?;
        let n_chars = record.context.chars().count();
        for qa in record.qas {
            let mut answers = Vec::new();
            for detected in &qa.detected_answers {
                for &[start, end_inclusive] in &detected.char_spans {
                    if end_inclusive < start || end_inclusive >= n_chars {
                        continue;
                    }
                    if let Some(text) = char_slice(&record.context, start, end_inclusive - start + 1) {
                        answers.push(Answer {
                            text: text.to_owned(),
                            char_start: start,
                        });
                    }
                }
            }
            let example = Example {
                id: qa.qid,
                domain: opts.domain.clone(),
                adversarial: opts.adversarial,
                question: qa.question,
                context: record.context.clone(),
                answers,
            };
            report.admit(example, &mut seen, opts.strict)?;
        }
    }
    Ok(report)
}

/// Reads the canonical JSONL dataset, re-validating every record.
pub fn read_dataset(path: &Path) -> Result<Vec<Example>> {
    let examples: Vec<Example> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    for ex in &examples {
        if !seen.insert(ex.id.as_str()) {
            return Err(Error::InvalidData(format!(
                "duplicate id {} in {}",
                ex.id,
                path.display()
            )));
        }
        ex.validate()?;
    }
    Ok(examples)
}

pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<()> {
    jsonl::write(path, examples)
}
