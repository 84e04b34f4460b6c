use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpanModel;
use crate::corpus::{tokenize_example, Example};
use crate::prob::log_softmax;
use crate::{jsonl, Error, Result};

/// A teacher's start/end log-probabilities for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherTargets {
    pub example_id: String,
    pub start_logprobs: Vec<f64>,
    pub end_logprobs: Vec<f64>,
    pub fingerprint: String,
}

impl TeacherTargets {
    pub fn start_probs(&self) -> Vec<f64> {
        self.start_logprobs.iter().map(|l| l.exp()).collect()
    }

    pub fn end_probs(&self) -> Vec<f64> {
        self.end_logprobs.iter().map(|l| l.exp()).collect()
    }
}

/// Runs the teacher over `examples`, one record per example in input order.
pub fn cache_teacher_outputs(model: &SpanModel, examples: &[Example]) -> Result<Vec<TeacherTargets>> {
    if model.vocab.fingerprint() != model.fingerprint() {
        return Err(Error::Fingerprint {
            expected: model.fingerprint().to_owned(),
            found: model.vocab.fingerprint(),
        });
    }
    crate::par_map(examples, |ex| {
        let logits = model.forward(&tokenize_example(ex)?)?;
        Ok(TeacherTargets {
            example_id: ex.id.clone(),
            start_logprobs: log_softmax(&logits.start),
            end_logprobs: log_softmax(&logits.end),
            fingerprint: model.fingerprint().to_owned(),
        })
    })
    .into_iter()
    .collect()
}

pub fn write_teacher_cache(path: &Path, records: &[TeacherTargets]) -> Result<()> {
    jsonl::write(path, records)
}

/// Loads a cache, refusing records produced under another vocabulary.
pub fn read_teacher_cache(path: &Path, expected_fingerprint: &str) -> Result<BTreeMap<String, TeacherTargets>> {
    let mut out = BTreeMap::new();
    for record in jsonl::read::<TeacherTargets>(path)? {
        if record.fingerprint != expected_fingerprint {
            return Err(Error::Fingerprint {
                expected: expected_fingerprint.to_owned(),
                found: record.fingerprint,
            });
        }
        if record.start_logprobs.len() != record.end_logprobs.len() {
            return Err(Error::LengthMismatch {
                what: "cached start/end log-probabilities",
                left: record.start_logprobs.len(),
                right: record.end_logprobs.len(),
            });
        }
        if out.insert(record.example_id.clone(), record).is_some() {
            return Err(Error::InvalidData(format!("duplicate cache record in {}", path.display())));
        }
    }
    Ok(out)
}
