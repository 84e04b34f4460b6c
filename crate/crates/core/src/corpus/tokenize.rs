use super::{Example, OwnedToken, Token, TokenSpan, TokenizedExample};
use crate::{Error, Result};

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Whitespace segmentation, further split so that each punctuation character
/// is its own token. Offsets are character positions, end exclusive.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    // (byte start, char start) of the word being accumulated
    let mut word: Option<(usize, usize)> = None;
    let mut char_idx = 0;

    let mut flush = |word: &mut Option<(usize, usize)>, byte_end: usize, char_end: usize| {
        if let Some((b, c)) = word.take() {
            tokens.push(Token {
                text: &text[b..byte_end],
                char_start: c,
                char_end,
            });
        }
    };

    for (byte, ch) in text.char_indices() {
        if ch.is_whitespace() {
            flush(&mut word, byte, char_idx);
        } else if is_punct(ch) {
            flush(&mut word, byte, char_idx);
            let mut single = Some((byte, char_idx));
            flush(&mut single, byte + ch.len_utf8(), char_idx + 1);
        } else if word.is_none() {
            word = Some((byte, char_idx));
        }
        char_idx += 1;
    }
    flush(&mut word, text.len(), char_idx);
    tokens
}

/// Minimal token range whose character coverage contains
/// `[char_start, char_start + char_len)`.
pub fn align_answer(tokens: &[OwnedToken], char_start: usize, char_len: usize) -> Option<TokenSpan> {
    let char_end = char_start + char_len;
    let start = tokens.iter().position(|t| t.char_end > char_start)?;
    let end = tokens.iter().rposition(|t| t.char_start < char_end)?;
    (start <= end && tokens[start].char_start < char_end).then_some(TokenSpan { start, end })
}

/// Sentence boundaries: a sentence ends after ".", "?" or "!" when the next
/// token is capitalized or the text ends.
pub fn split_sentences(tokens: &[OwnedToken]) -> Vec<TokenSpan> {
    let mut bounds = Vec::new();
    let mut first = 0;
    for (i, tok) in tokens.iter().enumerate() {
        let terminator = matches!(tok.text.as_str(), "." | "?" | "!");
        if !terminator {
            continue;
        }
        let next_starts_sentence = match tokens.get(i + 1) {
            None => true,
            Some(next) => crate::text::is_capitalized(&next.text),
        };
        if next_starts_sentence {
            bounds.push(TokenSpan::new(first, i));
            first = i + 1;
        }
    }
    if first < tokens.len() {
        bounds.push(TokenSpan::new(first, tokens.len() - 1));
    }
    bounds
}

pub fn tokenize_example(example: &Example) -> Result<TokenizedExample> {
    let question_tokens: Vec<OwnedToken> =
        tokenize(&example.question).into_iter().map(Into::into).collect();
    let context_tokens: Vec<OwnedToken> =
        tokenize(&example.context).into_iter().map(Into::into).collect();
    let context_chars = example.context.chars().count();

    let mut gold_spans = Vec::with_capacity(example.answers.len());
    for answer in &example.answers {
        let len = answer.text.chars().count();
        if answer.char_start + len > context_chars {
            return Err(Error::Alignment {
                id: example.id.clone(),
                reason: format!(
                    "answer range {}..{} outside context of {} characters",
                    answer.char_start,
                    answer.char_start + len,
                    context_chars
                ),
            });
        }
        let span = align_answer(&context_tokens, answer.char_start, len).ok_or_else(|| {
            Error::Alignment {
                id: example.id.clone(),
                reason: format!("answer {:?} covers no token", answer.text),
            }
        })?;
        gold_spans.push(span);
    }
    let sentence_bounds = split_sentences(&context_tokens);
    Ok(TokenizedExample {
        example_id: example.id.clone(),
        question_tokens,
        context_tokens,
        gold_spans,
        sentence_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Answer;

    fn owned(text: &str) -> Vec<OwnedToken> {
        tokenize(text).into_iter().map(Into::into).collect()
    }

    fn texts(text: &str) -> Vec<&str> {
        tokenize(text).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_words_and_punctuation() {
        let toks = tokenize("Super Bowl 50 took place.");
        let got: Vec<_> = toks.iter().map(|t| (t.text, t.char_start, t.char_end)).collect();
        assert_eq!(
            got,
            vec![
                ("Super", 0, 5),
                ("Bowl", 6, 10),
                ("50", 11, 13),
                ("took", 14, 18),
                ("place", 19, 24),
                (".", 24, 25),
            ]
        );
    }

    #[test]
    fn numeric_ratio_splits_at_hyphen() {
        assert_eq!(texts("15-1"), vec!["15", "-", "1"]);
        assert_eq!(texts("4.7"), vec!["4", ".", "7"]);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn offsets_are_code_points() {
        let toks = tokenize("Zoë’s café");
        let got: Vec<_> = toks.iter().map(|t| (t.text, t.char_start, t.char_end)).collect();
        assert_eq!(got, vec![("Zoë", 0, 3), ("’", 3, 4), ("s", 4, 5), ("café", 6, 10)]);
    }

    #[test]
    fn align_exact_token() {
        assert_eq!(align_answer(&owned("AB CD EF"), 3, 2), Some(TokenSpan::new(1, 1)));
    }

    #[test]
    fn align_expands_to_whole_tokens() {
        assert_eq!(align_answer(&owned("AB CD EF"), 1, 3), Some(TokenSpan::new(0, 1)));
    }

    #[test]
    fn align_out_of_bounds_is_error() {
        let ex = Example {
            id: "x".into(),
            domain: "d".into(),
            adversarial: false,
            question: "q".into(),
            context: "AB CD EF".into(),
            answers: vec![Answer {
                text: "EF GH".into(),
                char_start: 6,
            }],
        };
        assert!(matches!(tokenize_example(&ex), Err(Error::Alignment { .. })));
    }

    #[test]
    fn sentences_two_terminators() {
        assert_eq!(
            split_sentences(&owned("A b. C d.")),
            vec![TokenSpan::new(0, 2), TokenSpan::new(3, 5)]
        );
    }

    #[test]
    fn sentences_without_terminator() {
        assert_eq!(split_sentences(&owned("no terminator here")), vec![TokenSpan::new(0, 2)]);
    }

    #[test]
    fn distractor_is_own_sentence() {
        let text = "Von Miller plays linebacker. Otto Baker plays the position of hamster.";
        let toks = owned(text);
        let bounds = split_sentences(&toks);
        assert_eq!(bounds.len(), 2);
        assert_eq!(toks[bounds[1].start].text, "Otto");
        assert_eq!(toks[bounds[1].end - 1].text, "hamster");
    }

    #[test]
    fn decimal_point_does_not_split_sentence() {
        let toks = owned("He averaged 4.7 yards per carry. Boyd Holman averaged 9.7.");
        assert_eq!(split_sentences(&toks).len(), 2);
    }
}
