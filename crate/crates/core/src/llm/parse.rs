use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::corpus::OUTSIDE;

// "line" (any case), index, colon; tolerates markdown emphasis around the index
static LINE_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bline\s*(\d+)\s*(?:\*\*|__)?\s*:").expect("valid regex"));

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parsed_count: usize,
    pub expected_count: usize,
    pub padded: usize,
    pub truncated: usize,
    pub unparseable_lines: Vec<String>,
    /// Set when the extracted line indices decrease somewhere.
    #[serde(default)]
    pub out_of_order: bool,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        self.padded == 0 && self.truncated == 0 && self.unparseable_lines.is_empty() && !self.out_of_order
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub note_id: String,
    pub labels: Vec<String>,
    pub diagnostics: Diagnostics,
}

/// Lowercases and collapses every run of non-alphanumerics into one hyphen.
/// The outside token passes through untouched.
pub fn normalize_header(raw: &str) -> String {
    let trimmed = raw.trim();
    if trimmed == OUTSIDE {
        return OUTSIDE.to_string();
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut pending_hyphen = false;
    for c in trimmed.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            if pending_hyphen && !out.is_empty() {
                out.push('-');
            }
            pending_hyphen = false;
            out.push(c);
        } else {
            pending_hyphen = true;
        }
    }
    out
}

fn clean_header(segment: &str) -> &str {
    segment
        .trim()
        .trim_start_matches(['*', '_', '`'])
        .trim_end_matches([',', ';', '*', '_', '`'])
        .trim()
}

/// Extracts every `Line <n>: <header>` in order of appearance. Completion
/// lines without a match are kept verbatim in the diagnostics.
pub fn parse_predictions(note_id: &str, raw: &str, expected_count: usize) -> Result<ParsedPrediction, LlmError> {
    let mut labels = Vec::new();
    let mut indices: Vec<usize> = Vec::new();
    let mut unparseable = Vec::new();
    for line in raw.lines() {
        let markers: Vec<_> = LINE_MARKER.captures_iter(line).collect();
        if markers.is_empty() {
            if !line.trim().is_empty() {
                unparseable.push(line.to_string());
            }
            continue;
        }
        for (k, caps) in markers.iter().enumerate() {
            let whole = caps.get(0).expect("group 0");
            let end = markers.get(k + 1).map_or(line.len(), |next| next.get(0).expect("group 0").start());
            labels.push(normalize_header(clean_header(&line[whole.end()..end])));
            if let Ok(i) = caps[1].parse::<usize>() {
                indices.push(i);
            }
        }
    }
    if labels.is_empty() {
        return Err(LlmError::NoParsableLines(note_id.to_string()));
    }
    let out_of_order = indices.windows(2).any(|w| w[1] < w[0]);
    if out_of_order {
        tracing::warn!(note_id, "completion line indices are not in order");
    }
    Ok(ParsedPrediction {
        note_id: note_id.to_string(),
        diagnostics: Diagnostics {
            parsed_count: labels.len(),
            expected_count,
            padded: 0,
            truncated: 0,
            unparseable_lines: unparseable,
            out_of_order,
        },
        labels,
    })
}

/// Truncates extra labels or pads with `<none>` up to `expected_count`.
pub fn reconcile_length(mut parsed: ParsedPrediction, expected_count: usize) -> ParsedPrediction {
    let n = parsed.labels.len();
    parsed.diagnostics.expected_count = expected_count;
    parsed.diagnostics.padded = 0;
    parsed.diagnostics.truncated = 0;
    if n > expected_count {
        parsed.labels.truncate(expected_count);
        parsed.diagnostics.truncated = n - expected_count;
    } else if n < expected_count {
        parsed.labels.resize(expected_count, OUTSIDE.to_string());
        parsed.diagnostics.padded = expected_count - n;
    }
    parsed
}
