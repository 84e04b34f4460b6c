use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{tokenize, Example};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SEP: &str = "[SEP]";

/// Tokenizer revision folded into every fingerprint.
const TOKENIZER_REVISION: &str = "punct-split-v1";

/// Case-insensitive token vocabulary. Reserved symbols take ids 0..3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocab {
    fn from(f: VocabFile) -> Self {
        Vocab::from_tokens(f.tokens)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

impl Vocab {
    pub const PAD_ID: u32 = 0;
    pub const UNK_ID: u32 = 1;
    pub const SEP_ID: u32 = 2;

    /// Builds from an explicit token list, which must start with the reserved symbols.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// Lowercased types with frequency ≥ `min_freq`, ordered by
    /// (frequency desc, token asc) after the reserved symbols.
    pub fn build(examples: &[Example], min_freq: usize) -> Self {
        let min_freq = min_freq.max(1);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for ex in examples {
            for text in [&ex.question, &ex.context] {
                for tok in tokenize(text) {
                    *counts.entry(tok.text.to_lowercase()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = [PAD, UNK, SEP].iter().map(|s| s.to_string()).collect();
        tokens.extend(
            kept.into_iter()
                .map(|(t, _)| t)
                .filter(|t| t != PAD && t != UNK && t != SEP),
        );
        Vocab::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
            .unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Content types, excluding the reserved symbols.
    pub fn types(&self) -> &[String] {
        &self.tokens[3.min(self.tokens.len())..]
    }

    /// Hex SHA-256 over the tokenizer revision and the ordered token list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(TOKENIZER_REVISION.as_bytes());
        for t in &self.tokens {
            h.update(b"\n");
            h.update(t.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Answer;

    fn ex(id: &str, context: &str) -> Example {
        Example {
            id: id.into(),
            domain: "t".into(),
            adversarial: false,
            question: String::new(),
            context: context.into(),
            answers: vec![Answer {
                text: context[..1].into(),
                char_start: 0,
            }],
        }
    }

    #[test]
    fn min_freq_one_keeps_all_types() {
        let v = Vocab::build(&[ex("1", "a b"), ex("2", "b c")], 1);
        assert_eq!(v.types(), ["b", "a", "c"]);
        assert_eq!(v.id(PAD), 0);
        assert_eq!(v.id(UNK), 1);
        assert_eq!(v.id(SEP), 2);
    }

    #[test]
    fn min_freq_two_keeps_shared_type() {
        let v = Vocab::build(&[ex("1", "a b"), ex("2", "b c")], 2);
        assert_eq!(v.types(), ["b"]);
        assert_eq!(v.id("a"), Vocab::UNK_ID);
    }

    #[test]
    fn deterministic_and_case_insensitive() {
        let corpus = [ex("1", "Bowl bowl Place"), ex("2", "place Chicago")];
        let a = Vocab::build(&corpus, 1);
        let b = Vocab::build(&corpus, 1);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.id("BOWL"), a.id("bowl"));
    }

    #[test]
    fn serde_roundtrip_keeps_fingerprint() {
        let v = Vocab::build(&[ex("1", "x y z")], 1);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_eq!(back.id("y"), v.id("y"));
    }
}
