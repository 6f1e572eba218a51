use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_FEATURE_SPACE: u32 = 1 << 20;
pub const DEFAULT_MAX_TOKENS: usize = 100;
pub const BIAS_INDEX: u32 = 0;
const POSITION_BUCKETS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub feature_space_size: u32,
    pub max_tokens: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            feature_space_size: DEFAULT_FEATURE_SPACE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Builds a vector, summing weights of repeated indices.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, w) in pairs {
            *acc.entry(i).or_default() += w;
        }
        Self {
            entries: acc.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Index of a namespaced feature string. Index 0 is reserved for the bias.
pub fn feature_index(feature: &str, feature_space_size: u32) -> u32 {
    let index = (fnv1a64(feature.as_bytes()) % u64::from(feature_space_size)) as u32;
    if index == BIAS_INDEX {
        1
    } else {
        index
    }
}

/// Maximal alphanumeric runs and single punctuation marks, lowercased, keeping
/// the first `max_tokens`.
pub fn tokenize_and_truncate(line: &str, max_tokens: usize) -> Vec<String> {
    raw_tokens(line, max_tokens)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

fn raw_tokens(line: &str, max_tokens: usize) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if tokens.len() >= max_tokens {
            return tokens;
        }
        if c.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            tokens.push(&line[s..i]);
            if tokens.len() >= max_tokens {
                return tokens;
            }
        }
        if !c.is_whitespace() {
            tokens.push(&line[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = run_start {
        if tokens.len() < max_tokens {
            tokens.push(&line[s..]);
        }
    }
    tokens
}

/// Hashed sparse features for one line of a note.
///
/// Empty lines get the bias feature only. Otherwise: token unigrams and
/// bigrams, character trigrams over the (truncated) token stream, and
/// indicator features for a trailing colon, an all-caps leading word, digits,
/// short lines and the relative position in the note.
pub fn extract_features(
    line: &str,
    position_in_note: usize,
    note_length: usize,
    config: &FeatureConfig,
) -> FeatureVector {
    debug_assert!(position_in_note < note_length.max(1));
    let size = config.feature_space_size;
    let raw = raw_tokens(line, config.max_tokens);
    if raw.is_empty() {
        return FeatureVector::from_pairs([(BIAS_INDEX, 1.0)]);
    }
    let tokens: Vec<String> = raw.iter().map(|t| t.to_lowercase()).collect();

    let mut names: Vec<String> = Vec::with_capacity(tokens.len() * 4 + 8);
    for t in &tokens {
        names.push(format!("uni:{t}"));
    }
    for pair in tokens.windows(2) {
        names.push(format!("bi:{} {}", pair[0], pair[1]));
    }
    let joined: Vec<char> = tokens.join(" ").chars().collect();
    for tri in joined.windows(3) {
        names.push(format!("tri:{}", tri.iter().collect::<String>()));
    }

    if line.trim_end().ends_with(':') {
        names.push("ind:ends-with-colon".to_string());
    }
    let leading_word = raw.iter().find(|t| t.chars().all(char::is_alphabetic));
    if let Some(word) = leading_word {
        if word.chars().count() >= 2 && word.chars().all(char::is_uppercase) {
            names.push("ind:all-caps-prefix".to_string());
        }
    }
    if tokens.iter().any(|t| t.chars().any(|c| c.is_ascii_digit())) {
        names.push("ind:contains-digit".to_string());
    }
    if tokens.len() < 4 {
        names.push("ind:short-line".to_string());
    }
    let bucket = (POSITION_BUCKETS * position_in_note / note_length.max(1)).min(POSITION_BUCKETS - 1);
    names.push(format!("pos:{bucket}"));

    FeatureVector::from_pairs(
        std::iter::once((BIAS_INDEX, 1.0))
            .chain(names.iter().map(|n| (feature_index(n, size), 1.0))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_rule() {
        assert_eq!(
            tokenize_and_truncate("CBC, type and screen", 100),
            vec!["cbc", ",", "type", "and", "screen"]
        );
        assert_eq!(tokenize_and_truncate("CBC, type", 1), vec!["cbc"]);
        assert_eq!(tokenize_and_truncate("", 5), Vec::<String>::new());
        assert_eq!(
            tokenize_and_truncate("seen <DATE> G6P4013", 10),
            vec!["seen", "<", "date", ">", "g6p4013"]
        );
    }

    #[test]
    fn truncation_keeps_prefix() {
        let line: String = (0..130).map(|i| format!("w{i} ")).collect();
        let full = tokenize_and_truncate(&line, usize::MAX);
        assert_eq!(full.len(), 130);
        let cut = tokenize_and_truncate(&line, 100);
        assert_eq!(cut.len(), 100);
        assert_eq!(cut[..], full[..100]);
    }

    #[test]
    fn empty_line_is_bias_only() {
        let fv = extract_features("", 0, 1, &FeatureConfig::default());
        assert_eq!(fv.entries(), &[(0, 1.0)]);
        let fv = extract_features("   ", 0, 1, &FeatureConfig::default());
        assert_eq!(fv.entries(), &[(0, 1.0)]);
    }

    #[test]
    fn colon_indicator() {
        let cfg = FeatureConfig::default();
        let idx = feature_index("ind:ends-with-colon", cfg.feature_space_size);
        assert!(extract_features("Allergies:", 0, 3, &cfg).get(idx).is_some());
        assert!(extract_features("no known allergies", 0, 3, &cfg).get(idx).is_none());
    }

    #[test]
    fn caps_and_position_indicators() {
        let cfg = FeatureConfig::default();
        let caps = feature_index("ind:all-caps-prefix", cfg.feature_space_size);
        assert!(extract_features("HPI: 28 y/o", 0, 1, &cfg).get(caps).is_some());
        assert!(extract_features("A/P:", 0, 1, &cfg).get(caps).is_none());
        let last = feature_index("pos:4", cfg.feature_space_size);
        assert!(extract_features("x", 9, 10, &cfg).get(last).is_some());
    }

    #[test]
    fn indices_are_sorted_unique_and_in_range() {
        let cfg = FeatureConfig {
            feature_space_size: 64,
            max_tokens: 100,
        };
        let fv = extract_features("the the the labs labs: 12", 1, 4, &cfg);
        let idx: Vec<u32> = fv.entries().iter().map(|e| e.0).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| i < 64));
        assert_eq!(fv.get(0), Some(1.0));
    }
}
