//! Predicted headers outside the label set: counting them and mapping them
//! back onto valid labels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{percent_half_up, LabelSet};
use crate::http;
use crate::jsonl::{self, JsonlError};
use crate::llm::{normalize_header, ChatClient, ChatMessage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    /// Hallucinated lines.
    pub hl: usize,
    pub total_lines: usize,
    /// `100 * hl / total_lines`, unrounded.
    pub h_percent: f64,
    /// Distinct invalid header strings.
    pub hs: usize,
    pub per_header_counts: BTreeMap<String, usize>,
}

impl HallucinationReport {
    /// H% rounded half-up to two decimals.
    pub fn h_percent_display(&self) -> String {
        format!("{:.2}", percent_half_up(self.hl, self.total_lines))
    }

    /// Invalid headers by count descending, then alphabetically.
    pub fn top_headers(&self, k: usize) -> Vec<(&str, usize)> {
        let mut rows: Vec<(&str, usize)> = self.per_header_counts.iter().map(|(h, &c)| (h.as_str(), c)).collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        rows.truncate(k);
        rows
    }
}

pub fn is_valid_header(header: &str, label_set: &LabelSet) -> bool {
    label_set.contains(&normalize_header(header))
}

/// A line is hallucinated when its normalized header is not in the label set.
pub fn detect_hallucinations<P: AsRef<[String]>>(predictions: &[P], label_set: &LabelSet) -> HallucinationReport {
    let mut per_header_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_lines = 0;
    for note in predictions {
        for header in note.as_ref() {
            total_lines += 1;
            let norm = normalize_header(header);
            if !label_set.contains(&norm) {
                *per_header_counts.entry(norm).or_default() += 1;
            }
        }
    }
    let hl = per_header_counts.values().sum();
    HallucinationReport {
        hl,
        total_lines,
        h_percent: if total_lines == 0 {
            0.0
        } else {
            100.0 * hl as f64 / total_lines as f64
        },
        hs: per_header_counts.len(),
        per_header_counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMethod {
    Llm,
    Fallback,
}

fn token_overlap(a: &str, b: &str) -> usize {
    let ta: BTreeSet<&str> = a.split('-').filter(|t| !t.is_empty()).collect();
    b.split('-').filter(|t| !t.is_empty()).collect::<BTreeSet<_>>().intersection(&ta).count()
}

/// The label closest to `invalid` by Levenshtein distance over the longer
/// slug length. Ties prefer more shared hyphen tokens, then the
/// lexicographically smallest label.
pub fn fallback_similarity_map(invalid: &str, label_set: &LabelSet) -> String {
    nearest_label(invalid, label_set.labels()).unwrap_or_default()
}

/// [`fallback_similarity_map`] over an arbitrary candidate list; `None`
/// only when `candidates` is empty.
pub fn nearest_label<S: AsRef<str>>(invalid: &str, candidates: &[S]) -> Option<String> {
    let query = normalize_header(invalid);
    let q_len = query.chars().count();
    let mut best: Option<(usize, usize, usize, &str)> = None;
    for label in candidates.iter().map(AsRef::as_ref) {
        let dist = strsim::levenshtein(&query, label);
        let max_len = q_len.max(label.chars().count());
        let overlap = token_overlap(&query, label);
        let better = match best {
            None => true,
            Some((bd, bm, bo, bl)) => {
                // compare dist / max_len exactly; 0 / 0 counts as 0
                let lhs = dist * bm.max(1);
                let rhs = bd * max_len.max(1);
                lhs < rhs || (lhs == rhs && (overlap > bo || (overlap == bo && label < bl)))
            }
        };
        if better {
            best = Some((dist, max_len, overlap, label));
        }
    }
    best.map(|b| b.3.to_string())
}

/// Messages asking a chat model to map one header onto the valid list. Only
/// header strings are sent, never note text.
pub fn mapping_prompt(invalid: &str, label_set: &LabelSet) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(
            "You map non-standard clinical note section headers onto a fixed list of valid section headers.",
        ),
        ChatMessage::user(format!(
            "Header: {invalid}\n\nValid section headers:\n{}\n\n\
             Reply with exactly one header from the list, copied verbatim, and nothing else.",
            label_set.labels().join(", ")
        )),
    ]
}

const MAPPING_MAX_TOKENS: usize = 32;

/// Maps one invalid header to a valid label. Uses the chat model when given
/// and its reply validates; otherwise the similarity fallback.
pub fn correct_header(
    invalid: &str,
    label_set: &LabelSet,
    client: Option<&dyn ChatClient>,
) -> (String, CorrectionMethod) {
    if let Some(client) = client {
        match client.complete(&mapping_prompt(invalid, label_set), MAPPING_MAX_TOKENS) {
            Ok(reply) => {
                let first = reply.content.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                let mapped = normalize_header(first.trim().trim_matches(['"', '\'', '`', '.']));
                if label_set.contains(&mapped) {
                    return (mapped, CorrectionMethod::Llm);
                }
                tracing::warn!(invalid, reply = %reply.content, "mapping reply is not a valid label");
            }
            Err(e) => tracing::warn!(invalid, "mapping request failed: {e}"),
        }
    }
    (fallback_similarity_map(invalid, label_set), CorrectionMethod::Fallback)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub invalid: String,
    pub label_set: String,
    pub mapped_to: String,
    pub method: CorrectionMethod,
}

/// Invalid header mappings per label set. The first insertion for a key wins.
#[derive(Debug, Default)]
pub struct CorrectionCache {
    entries: Mutex<BTreeMap<(String, String), (String, CorrectionMethod)>>,
}

impl CorrectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a JSONL cache; a missing file is an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(Self::new());
        }
        let cache = Self::new();
        for r in jsonl::read::<CacheRecord>(path)? {
            cache.insert(&r.invalid, &r.label_set, r.mapped_to, r.method);
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), JsonlError> {
        jsonl::write(path.as_ref(), &self.records())
    }

    pub fn records(&self) -> Vec<CacheRecord> {
        let entries = self.entries.lock().expect("cache lock");
        entries
            .iter()
            .map(|((invalid, set), (mapped, method))| CacheRecord {
                invalid: invalid.clone(),
                label_set: set.clone(),
                mapped_to: mapped.clone(),
                method: *method,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached mapping, ignored unless it is a member of `label_set`.
    pub fn get(&self, invalid: &str, label_set: &LabelSet) -> Option<(String, CorrectionMethod)> {
        let entries = self.entries.lock().expect("cache lock");
        entries
            .get(&(invalid.to_string(), label_set.name().to_string()))
            .filter(|(mapped, _)| label_set.contains(mapped))
            .cloned()
    }

    /// Stores a mapping unless the key is already present; returns the stored value.
    pub fn insert(
        &self,
        invalid: &str,
        label_set_name: &str,
        mapped_to: String,
        method: CorrectionMethod,
    ) -> (String, CorrectionMethod) {
        let mut entries = self.entries.lock().expect("cache lock");
        entries
            .entry((invalid.to_string(), label_set_name.to_string()))
            .or_insert((mapped_to, method))
            .clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionEntry {
    pub invalid: String,
    pub corrected: String,
    pub count: usize,
    pub method: CorrectionMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    /// Most frequent invalid header first.
    pub entries: Vec<CorrectionEntry>,
    pub corrected_lines: usize,
    pub note: String,
}

impl CorrectionSummary {
    pub fn render_top(&self, k: usize) -> String {
        let mut out = String::from("rank  invalid header -> corrected label (lines, method)\n");
        for (i, e) in self.entries.iter().take(k).enumerate() {
            let method = match e.method {
                CorrectionMethod::Llm => "llm",
                CorrectionMethod::Fallback => "fallback",
            };
            out.push_str(&format!("{:>4}  {} -> {} ({}, {method})\n", i + 1, e.invalid, e.corrected, e.count));
        }
        out
    }
}

const SUMMARY_NOTE: &str =
    "Mappings are automatic and unreviewed; a corrected label can still differ from the intended section.";

/// Replaces every hallucinated header with a valid label. Each distinct
/// invalid header is resolved once (cache first, then `correct_header`).
pub fn apply_corrections<P: AsRef<[String]>>(
    predictions: &[P],
    label_set: &LabelSet,
    cache: &CorrectionCache,
    client: Option<&dyn ChatClient>,
) -> (Vec<Vec<String>>, CorrectionSummary) {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for note in predictions {
        for h in note.as_ref() {
            let norm = normalize_header(h);
            if !label_set.contains(&norm) {
                *counts.entry(norm).or_default() += 1;
            }
        }
    }
    let mut unique: Vec<&String> = counts.keys().collect();
    unique.sort();
    let in_flight = client.map_or(1, |c| c.max_in_flight());
    let resolved = http::bounded_map(&unique, in_flight, |invalid| {
        if let Some(hit) = cache.get(invalid, label_set) {
            return hit;
        }
        let (mapped, method) = correct_header(invalid, label_set, client);
        cache.insert(invalid, label_set.name(), mapped, method)
    });
    let mapping: HashMap<&str, (String, CorrectionMethod)> =
        unique.iter().map(|s| s.as_str()).zip(resolved).collect();

    let corrected: Vec<Vec<String>> = predictions
        .iter()
        .map(|note| {
            note.as_ref()
                .iter()
                .map(|h| {
                    let norm = normalize_header(h);
                    match mapping.get(norm.as_str()) {
                        Some((mapped, _)) => mapped.clone(),
                        None => h.clone(),
                    }
                })
                .collect()
        })
        .collect();

    let mut entries: Vec<CorrectionEntry> = mapping
        .iter()
        .map(|(invalid, (mapped, method))| CorrectionEntry {
            invalid: invalid.to_string(),
            corrected: mapped.clone(),
            count: counts[*invalid],
            method: *method,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then(a.invalid.cmp(&b.invalid)));
    let summary = CorrectionSummary {
        corrected_lines: counts.values().sum(),
        entries,
        note: SUMMARY_NOTE.to_string(),
    };
    (corrected, summary)
}
