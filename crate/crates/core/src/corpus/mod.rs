//! Dataset ingestion, tokenization and answer alignment.
//!
//! All character offsets in this module count Unicode scalar values (code
//! points), never bytes.

mod loaders;
mod synth;
mod tokenize;
mod vocab;

use serde::{Deserialize, Serialize};

pub use loaders::{
    load_mrqa_jsonl, load_squad_json, parse_mrqa_lines, parse_squad_str, read_dataset,
    write_dataset, LoadOptions, LoadReport, Rejection,
};
pub use synth::{generate_synthetic, SynthConfig};
pub use tokenize::{align_answer, split_sentences, tokenize, tokenize_example};
pub use vocab::{Vocab, PAD, SEP, UNK};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub char_start: usize,
}

/// One extractive QA instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub domain: String,
    #[serde(default)]
    pub adversarial: bool,
    pub question: String,
    pub context: String,
    pub answers: Vec<Answer>,
}

impl Example {
    /// Checks that answers exist and each sits verbatim at its offset.
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::Alignment {
                id: self.id.clone(),
                reason: "no gold answers".into(),
            });
        }
        for answer in &self.answers {
            match char_slice(&self.context, answer.char_start, answer.text.chars().count()) {
                Some(found) if found == answer.text => {}
                Some(found) => {
                    return Err(Error::Alignment {
                        id: self.id.clone(),
                        reason: format!(
                            "answer {:?} not found at {} (context has {:?})",
                            answer.text, answer.char_start, found
                        ),
                    })
                }
                None => {
                    return Err(Error::Alignment {
                        id: self.id.clone(),
                        reason: format!(
                            "answer {:?} at {} runs past the end of the context",
                            answer.text, answer.char_start
                        ),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn gold_texts(&self) -> impl Iterator<Item = &str> {
        self.answers.iter().map(|a| a.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub char_start: usize,
    pub char_end: usize,
}

/// Owned token, as stored in [`TokenizedExample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnedToken {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl From<Token<'_>> for OwnedToken {
    fn from(t: Token<'_>) -> Self {
        OwnedToken {
            text: t.text.to_owned(),
            char_start: t.char_start,
            char_end: t.char_end,
        }
    }
}

/// Inclusive token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub example_id: String,
    pub question_tokens: Vec<OwnedToken>,
    pub context_tokens: Vec<OwnedToken>,
    /// One span per gold answer, in answer order.
    pub gold_spans: Vec<TokenSpan>,
    /// Inclusive `(first, last)` token index per context sentence.
    pub sentence_bounds: Vec<TokenSpan>,
}

impl TokenizedExample {
    /// Index of the sentence containing context token `token`.
    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentence_bounds
            .iter()
            .position(|s| s.start <= token && token <= s.end)
    }

    /// Source text covered by a token span.
    pub fn span_text<'c>(&self, context: &'c str, span: TokenSpan) -> &'c str {
        let first = &self.context_tokens[span.start];
        let last = &self.context_tokens[span.end];
        char_slice(context, first.char_start, last.char_end - first.char_start).unwrap_or("")
    }
}

/// Substring of `text` covering `len` characters from character `start`.
pub fn char_slice(text: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    if len == 0 {
        return Some(&text[begin..begin]);
    }
    let end = indices.nth(len - 1)?;
    Some(&text[begin..end])
}
