//! Lexical helpers shared by the bias model and the error classifier.

use std::collections::BTreeSet;

/// Function words ignored when measuring question/context overlap.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "the", "did", "do", "does", "what", "where", "who", "when", "how", "was", "is",
    "were", "are", "in", "for", "of", "to", "during", "their", "his", "her",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// True when every character is neither alphanumeric nor whitespace.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}

/// Lowercased content word, or `None` for stopwords and punctuation.
pub fn content_form(token: &str) -> Option<String> {
    if is_punctuation_token(token) {
        return None;
    }
    let lower = token.to_lowercase();
    (!is_stopword(&lower)).then_some(lower)
}

/// Set of content words among `tokens`.
pub fn content_set<'a, I>(tokens: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a str>,
{
    tokens.into_iter().filter_map(content_form).collect()
}

/// Whether the first character is uppercase.
pub fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}
