//! Turning raw model continuations into structured answers.
//!
//! All functions here are total: every input string maps to exactly one
//! result, with `Invalid` as the catch-all rather than an error. The scan
//! rules are deliberately simple (first matching token wins) and are kept in
//! this one module so they can be swapped without touching scoring.

use serde::{Deserialize, Serialize};

use crate::dataset::Letter;

/// Outcome of parsing one continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    ValidLetter(Letter),
    ValidBool(bool),
    Invalid,
}

impl AnswerStatus {
    pub fn is_valid(self) -> bool {
        !matches!(self, AnswerStatus::Invalid)
    }
}

/// A parsed answer plus enough context to audit the parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub status: AnswerStatus,
    /// Byte offset and length of the token the scan matched, if any. Present
    /// even when an out-of-range letter made the answer `Invalid`.
    pub matched_span: Option<(usize, usize)>,
    /// The text that was parsed, kept verbatim.
    pub raw: String,
}

impl ParsedAnswer {
    fn invalid(raw: &str) -> Self {
        ParsedAnswer {
            status: AnswerStatus::Invalid,
            matched_span: None,
            raw: raw.to_string(),
        }
    }
}

/// Scan left-to-right for the first letter token: a parenthesized capital
/// `(X)` or a standalone capital bounded by non-alphanumerics. The first
/// token decides the outcome: within the first `num_choices` letters it is
/// the answer, otherwise the whole continuation is `Invalid` (e.g. `(E)`
/// with four choices).
pub fn parse_letter(text: &str, num_choices: usize) -> ParsedAnswer {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (pos, &(offset, c)) in chars.iter().enumerate() {
        let token: Option<(char, usize)> = if c == '(' {
            match (chars.get(pos + 1), chars.get(pos + 2)) {
                (Some(&(_, x)), Some(&(_, ')'))) if x.is_ascii_uppercase() => {
                    Some((x, 3 * '('.len_utf8())) // '(', letter, ')' are 1 byte each
                }
                _ => None,
            }
        } else if c.is_ascii_uppercase() {
            let prev_ok = pos == 0 || !chars[pos - 1].1.is_alphanumeric();
            let next_ok = chars
                .get(pos + 1)
                .map_or(true, |&(_, n)| !n.is_alphanumeric());
            (prev_ok && next_ok).then_some((c, 1))
        } else {
            None
        };
        if let Some((letter_char, len)) = token {
            let index = (letter_char as u8 - b'A') as usize;
            let status = match Letter::from_index(index) {
                Some(letter) if index < num_choices => AnswerStatus::ValidLetter(letter),
                _ => AnswerStatus::Invalid,
            };
            return ParsedAnswer {
                status,
                matched_span: Some((offset, len)),
                raw: text.to_string(),
            };
        }
    }
    ParsedAnswer::invalid(text)
}

/// First maximal alphanumeric run, compared case-insensitively against
/// `true` / `false`; anything else is `Invalid`.
pub fn parse_bool(text: &str) -> ParsedAnswer {
    let mut start = None;
    let mut end = text.len();
    for (offset, c) in text.char_indices() {
        match (start, c.is_alphanumeric()) {
            (None, true) => start = Some(offset),
            (Some(_), false) => {
                end = offset;
                break;
            }
            _ => {}
        }
    }
    let Some(start) = start else {
        return ParsedAnswer::invalid(text);
    };
    let word = &text[start..end];
    let status = if word.eq_ignore_ascii_case("true") {
        AnswerStatus::ValidBool(true)
    } else if word.eq_ignore_ascii_case("false") {
        AnswerStatus::ValidBool(false)
    } else {
        return ParsedAnswer {
            status: AnswerStatus::Invalid,
            matched_span: Some((start, word.len())),
            raw: text.to_string(),
        };
    };
    ParsedAnswer {
        status,
        matched_span: Some((start, word.len())),
        raw: text.to_string(),
    }
}

/// Extract the generated question from a question-generation continuation:
/// everything before the first `Answer:` (the model tends to append its own
/// answer line), trimmed; the whole trimmed text when no `Answer:` occurs.
/// `None` when nothing remains.
pub fn extract_generated_question(text: &str) -> Option<String> {
    let head = match text.find("Answer:") {
        Some(pos) => &text[..pos],
        None => text,
    };
    let question = head.trim();
    (!question.is_empty()).then(|| question.to_string())
}

/// Parse the answer letter out of a single-generation continuation that
/// carries question and answer together: the letter is looked for only after
/// the first `Answer:`; a continuation without `Answer:` is `Invalid`.
pub fn parse_one_step(text: &str, num_choices: usize) -> ParsedAnswer {
    let Some(pos) = text.find("Answer:") else {
        return ParsedAnswer::invalid(text);
    };
    let tail_start = pos + "Answer:".len();
    let parsed = parse_letter(&text[tail_start..], num_choices);
    ParsedAnswer {
        status: parsed.status,
        matched_span: parsed
            .matched_span
            .map(|(offset, len)| (offset + tail_start, len)),
        raw: text.to_string(),
    }
}

/// Fraction of statuses that are valid; `None` on empty input.
pub fn validity_rate<'a, I>(statuses: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a AnswerStatus>,
{
    let mut total = 0usize;
    let mut valid = 0usize;
    for status in statuses {
        total += 1;
        if status.is_valid() {
            valid += 1;
        }
    }
    (total > 0).then(|| valid as f64 / total as f64)
}
