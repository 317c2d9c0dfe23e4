//! Small text helpers shared by extraction and analysis.

use regex::Regex;

/// Splits on `.`, `!` or `?` followed by whitespace. Pieces are trimmed and
/// empty pieces dropped; the terminating punctuation stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    push_trimmed(&mut sentences, &text[start..end]);
                    start = end;
                }
            }
        }
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, piece: &'a str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece);
    }
}

/// Case-insensitive whole-word matcher for a literal name.
pub(crate) fn name_matcher(name: &str) -> Regex {
    let escaped = regex::escape(name.trim());
    Regex::new(&format!(r"(?i)(?:^|\b){escaped}(?:\b|$)"))
        .expect("escaped literal is a valid regex")
}

/// Uppercases the first character, as speaker labels are displayed.
pub fn display_label(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
