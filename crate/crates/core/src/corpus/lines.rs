//! Deterministic line splitting.
//!
//! A note is cut at every newline, then each fragment is cut after `.`, `!`
//! or `?` when followed by whitespace and an uppercase letter or digit.
//! Pieces are trimmed and empty pieces dropped.

use std::ops::Range;

/// Splits raw note text into trimmed, non-empty lines.
pub fn split_into_lines(raw_text: &str) -> Vec<String> {
    line_ranges(raw_text)
        .into_iter()
        .map(|r| raw_text[r].to_string())
        .collect()
}

/// Byte ranges of the lines produced by [`split_into_lines`], in order.
pub(crate) fn line_ranges(raw_text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for fragment in raw_text.split('\n') {
        let base = offset;
        offset += fragment.len() + 1;

        let chars: Vec<(usize, char)> = fragment.char_indices().collect();
        let mut piece_start = 0;
        let mut in_mask = false;
        for (k, &(byte, c)) in chars.iter().enumerate() {
            match c {
                '<' if is_mask_open(&fragment[byte..]) => in_mask = true,
                '>' if in_mask => in_mask = false,
                '.' | '!' | '?' if !in_mask => {
                    let mut j = k + 1;
                    while j < chars.len() && chars[j].1.is_whitespace() {
                        j += 1;
                    }
                    let followed = j > k + 1
                        && j < chars.len()
                        && (chars[j].1.is_uppercase() || chars[j].1.is_ascii_digit());
                    if followed {
                        push_trimmed(&mut out, fragment, base, piece_start..byte + 1);
                        piece_start = chars[j].0;
                    }
                }
                _ => {}
            }
        }
        push_trimmed(&mut out, fragment, base, piece_start..fragment.len());
    }
    out
}

fn push_trimmed(out: &mut Vec<Range<usize>>, fragment: &str, base: usize, r: Range<usize>) {
    let piece = &fragment[r.clone()];
    let trimmed_start = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        let start = base + r.start + trimmed_start;
        out.push(start..start + trimmed.len());
    }
}

fn is_mask_open(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next() == Some('<') && chars.next().is_some_and(|c| c.is_ascii_uppercase())
}

/// Checks that every masked-identifier token (`<NAME>`, `<DATE>`, ...) is
/// closed. Returns the byte offset of the first malformed token.
pub fn find_malformed_mask_token(raw_text: &str) -> Option<usize> {
    for (byte, c) in raw_text.char_indices() {
        if c != '<' || !is_mask_open(&raw_text[byte..]) {
            continue;
        }
        let rest = &raw_text[byte + 1..];
        let body_len = rest
            .find(|ch: char| !(ch.is_ascii_uppercase() || ch == '_'))
            .unwrap_or(rest.len());
        if !rest[body_len..].starts_with('>') {
            return Some(byte);
        }
    }
    None
}
