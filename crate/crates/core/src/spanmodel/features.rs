use std::collections::BTreeSet;

use crate::corpus::{TokenizedExample, Vocab};
use crate::{Error, Result};

/// Segment of a question or separator position.
pub const SEGMENT_QUESTION: u8 = 0;
/// Context token whose lowercased form does not occur in the question.
pub const SEGMENT_CONTEXT: u8 = 1;
/// Context token whose lowercased form occurs in the question.
pub const SEGMENT_CONTEXT_MATCH: u8 = 2;
pub const N_SEGMENTS: usize = 3;

/// Token ids laid out as `[question; SEP; context]`, with a segment id per
/// position that also flags exact question-word matches in the context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub segments: Vec<u8>,
    pub context_offset: usize,
    /// Context tokens kept after truncation.
    pub context_len: usize,
    /// Context tokens dropped from the tail.
    pub truncated: usize,
}

/// Encodes an example, dropping context tail tokens beyond `max_seq_len`
/// when `truncate` is set.
pub fn encode(
    vocab: &Vocab,
    example: &TokenizedExample,
    max_seq_len: usize,
    truncate: bool,
) -> Result<EncodedInput> {
    let q_len = example.question_tokens.len();
    let c_len = example.context_tokens.len();
    let room = max_seq_len.saturating_sub(q_len + 1);
    if c_len == 0 {
        return Err(Error::InvalidData(format!("example {} has an empty context", example.example_id)));
    }
    if room == 0 || (room < c_len && !truncate) {
        return Err(Error::InvalidData(format!(
            "example {}: sequence of {} tokens exceeds max_seq_len {}",
            example.example_id,
            q_len + 1 + c_len,
            max_seq_len
        )));
    }
    let kept = c_len.min(room);
    let mut ids = Vec::with_capacity(q_len + 1 + kept);
    ids.extend(example.question_tokens.iter().map(|t| vocab.id(&t.text)));
    ids.push(Vocab::SEP_ID);
    ids.extend(example.context_tokens[..kept].iter().map(|t| vocab.id(&t.text)));

    let question: BTreeSet<String> = example.question_tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut segments = vec![SEGMENT_QUESTION; q_len + 1];
    segments.extend(example.context_tokens[..kept].iter().map(|t| {
        if question.contains(&t.text.to_lowercase()) {
            SEGMENT_CONTEXT_MATCH
        } else {
            SEGMENT_CONTEXT
        }
    }));
    Ok(EncodedInput {
        ids,
        segments,
        context_offset: q_len + 1,
        context_len: kept,
        truncated: c_len - kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize_example, Answer, Example};

    fn sample() -> (Vocab, TokenizedExample) {
        let ex = Example {
            id: "e".into(),
            domain: "d".into(),
            adversarial: false,
            question: "who won ?".into(),
            context: "Denver Broncos won the game .".into(),
            answers: vec![Answer { text: "Denver Broncos".into(), char_start: 0 }],
        };
        (Vocab::build(std::slice::from_ref(&ex), 1), tokenize_example(&ex).unwrap())
    }

    #[test]
    fn layout_question_sep_context() {
        let (vocab, tok) = sample();
        let enc = encode(&vocab, &tok, 64, true).unwrap();
        assert_eq!(enc.context_offset, 4);
        assert_eq!(enc.context_len, 6);
        assert_eq!(enc.ids[3], Vocab::SEP_ID);
        assert_eq!(enc.ids[4], vocab.id("denver"));
        assert_eq!(enc.segments[..4], [SEGMENT_QUESTION; 4]);
        // "won" is the only context word shared with the question
        assert_eq!(enc.segments[4..], [1, 1, 2, 1, 1, 1]);
        assert_eq!(enc.truncated, 0);
    }

    #[test]
    fn tail_truncation() {
        let (vocab, tok) = sample();
        let enc = encode(&vocab, &tok, 7, true).unwrap();
        assert_eq!(enc.context_len, 3);
        assert_eq!(enc.truncated, 3);
        assert!(encode(&vocab, &tok, 7, false).is_err());
        assert!(encode(&vocab, &tok, 4, true).is_err());
    }
}
