use serde::{Deserialize, Serialize};

use crate::corpus::TokenSpan;
use crate::prob::log_softmax;
use crate::{Error, Result};

/// Best span under `log_softmax(start)[i] + log_softmax(end)[j]` with
/// `i ≤ j < i + max_len`. Ties go to the lowest `i`, then the lowest `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedSpan {
    pub span: TokenSpan,
    pub score: f64,
}

pub fn decode_span(start_logits: &[f64], end_logits: &[f64], max_len: usize) -> Result<DecodedSpan> {
    let n = start_logits.len();
    if n == 0 {
        return Err(Error::Empty("cannot decode a span from empty logits"));
    }
    if end_logits.len() != n {
        return Err(Error::LengthMismatch {
            what: "start/end logits",
            left: n,
            right: end_logits.len(),
        });
    }
    if max_len == 0 {
        return Err(Error::Config("max span length must be at least 1".into()));
    }
    let ls = log_softmax(start_logits);
    let le = log_softmax(end_logits);
    let mut best = DecodedSpan {
        span: TokenSpan::new(0, 0),
        score: f64::NEG_INFINITY,
    };
    let mut found = false;
    for i in 0..n {
        for j in i..n.min(i + max_len) {
            let score = ls[i] + le[j];
            if !found || score > best.score {
                best = DecodedSpan { span: TokenSpan::new(i, j), score };
                found = true;
            }
        }
    }
    Ok(best)
}
