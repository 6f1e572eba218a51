//! Notes, labels and corpus-level transformations.

mod io;
mod labels;
mod lines;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    read_labeled_notes, read_notes, read_span_notes, write_labeled_notes, LabeledNoteRecord, from_io_tag,
    to_io_tag,
};
pub use labels::{LabelSet, OUTSIDE};
pub use lines::{find_malformed_mask_token, split_into_lines};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("record {record}: {message}")]
    Record { record: usize, message: String },
    #[error("note {note_id}: span {start}..{end} outside text of length {len}")]
    SpanOutOfBounds {
        note_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("note {note_id}: spans {first:?} and {second:?} overlap")]
    OverlappingSpans {
        note_id: String,
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("note {note_id}: label '{label}' is not in label set '{label_set}'")]
    UnknownLabel {
        note_id: String,
        label: String,
        label_set: String,
    },
    #[error("note {note_id}: malformed masked token at byte {offset}")]
    MalformedMaskToken { note_id: String, offset: usize },
    #[error("note {note_id}: {lines} lines but {labels} labels")]
    LengthMismatch {
        note_id: String,
        lines: usize,
        labels: usize,
    },
    #[error("train fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("consolidation map line {line}: {message}")]
    ConsolidationMap { line: usize, message: String },
}

/// A note as an ordered list of lines, without gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub note_id: String,
    #[serde(default)]
    pub category: Option<String>,
    pub lines: Vec<String>,
}

impl Note {
    pub fn from_text(note_id: impl Into<String>, raw_text: &str) -> Self {
        Self {
            note_id: note_id.into(),
            category: None,
            lines: split_into_lines(raw_text),
        }
    }
}

/// Character-offset section annotation (`start` inclusive, `end` exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// A raw note with its section spans, as stored in span-annotated JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanNote {
    pub note_id: String,
    #[serde(default)]
    pub category: Option<String>,
    pub text: String,
    #[serde(default)]
    pub spans: Vec<SectionSpan>,
}

impl SpanNote {
    /// Validates masked tokens and spans, then assigns one label per line.
    pub fn to_labeled(&self, label_set: &LabelSet) -> Result<LabeledNote, CorpusError> {
        if let Some(offset) = find_malformed_mask_token(&self.text) {
            return Err(CorpusError::MalformedMaskToken {
                note_id: self.note_id.clone(),
                offset,
            });
        }
        project_spans_to_lines(&self.note_id, &self.text, &self.spans, label_set)
    }
}

/// A note with exactly one gold label (bare slug or `<none>`) per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNote {
    pub note_id: String,
    pub lines: Vec<String>,
    pub labels: Vec<String>,
}

impl LabeledNote {
    pub fn new(
        note_id: impl Into<String>,
        lines: Vec<String>,
        labels: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let note_id = note_id.into();
        if lines.len() != labels.len() {
            return Err(CorpusError::LengthMismatch {
                note_id,
                lines: lines.len(),
                labels: labels.len(),
            });
        }
        Ok(Self {
            note_id,
            lines,
            labels,
        })
    }

    pub fn to_note(&self) -> Note {
        Note {
            note_id: self.note_id.clone(),
            category: None,
            lines: self.lines.clone(),
        }
    }

    /// Every label must belong to `label_set`.
    pub fn check_labels(&self, label_set: &LabelSet) -> Result<(), CorpusError> {
        match self.labels.iter().find(|l| !label_set.contains(l)) {
            Some(label) => Err(CorpusError::UnknownLabel {
                note_id: self.note_id.clone(),
                label: label.clone(),
                label_set: label_set.name().to_string(),
            }),
            None => Ok(()),
        }
    }
}

/// Anything with a line count, so length filtering works on labeled and
/// unlabeled notes alike.
pub trait HasLines {
    fn line_count(&self) -> usize;
}

impl HasLines for Note {
    fn line_count(&self) -> usize {
        self.lines.len()
    }
}

impl HasLines for LabeledNote {
    fn line_count(&self) -> usize {
        self.lines.len()
    }
}

/// Assigns each line the label of the span containing its character midpoint,
/// or `<none>` when no span does.
pub fn project_spans_to_lines(
    note_id: &str,
    raw_text: &str,
    spans: &[SectionSpan],
    label_set: &LabelSet,
) -> Result<LabeledNote, CorpusError> {
    let char_len = raw_text.chars().count();
    let mut sorted: Vec<&SectionSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for span in &sorted {
        if span.start >= span.end || span.end > char_len {
            return Err(CorpusError::SpanOutOfBounds {
                note_id: note_id.to_string(),
                start: span.start,
                end: span.end,
                len: char_len,
            });
        }
        if !label_set.contains(&span.label) {
            return Err(CorpusError::UnknownLabel {
                note_id: note_id.to_string(),
                label: span.label.clone(),
                label_set: label_set.name().to_string(),
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(CorpusError::OverlappingSpans {
                note_id: note_id.to_string(),
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }

    // byte offset -> char offset, valid at char boundaries
    let mut char_at = vec![0usize; raw_text.len() + 1];
    for (ci, (bi, _)) in raw_text.char_indices().enumerate() {
        char_at[bi] = ci;
    }
    char_at[raw_text.len()] = char_len;

    let ranges = lines::line_ranges(raw_text);
    let mut out_lines = Vec::with_capacity(ranges.len());
    let mut labels = Vec::with_capacity(ranges.len());
    for range in ranges {
        let (start, end) = (char_at[range.start], char_at[range.end]);
        // midpoint containment in doubled coordinates
        let mid2 = start + end;
        let idx = sorted.partition_point(|s| 2 * s.end <= mid2);
        let label = match sorted.get(idx) {
            Some(span) if 2 * span.start <= mid2 => span.label.clone(),
            _ => OUTSIDE.to_string(),
        };
        out_lines.push(raw_text[range].to_string());
        labels.push(label);
    }
    LabeledNote::new(note_id, out_lines, labels)
}

/// Label rewrite table, e.g. `plan -> assessment-and-plan`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationMap(BTreeMap<String, String>);

impl ConsolidationMap {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self(entries.into_iter().collect())
    }

    /// Parses `from<TAB>to` lines; blank lines and `#` comments are ignored.
    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (from, to) = line.split_once('\t').ok_or(CorpusError::ConsolidationMap {
                line: i + 1,
                message: "expected two tab-separated columns".to_string(),
            })?;
            if to.contains('\t') {
                return Err(CorpusError::ConsolidationMap {
                    line: i + 1,
                    message: "more than two columns".to_string(),
                });
            }
            map.insert(from.trim().to_string(), to.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.0.get(label).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every target must be a member of `target`.
    pub fn validate(&self, target: &LabelSet) -> Result<(), CorpusError> {
        for (i, to) in self.0.values().enumerate() {
            if !target.contains(to) {
                return Err(CorpusError::ConsolidationMap {
                    line: i + 1,
                    message: format!("target '{to}' not in label set '{}'", target.name()),
                });
            }
        }
        Ok(())
    }

    pub fn apply<'a>(&'a self, label: &'a str) -> &'a str {
        self.get(label).unwrap_or(label)
    }

    /// The label set left after consolidation: every source label that maps
    /// to a different label is removed.
    pub fn consolidate_label_set(&self, set: &LabelSet, name: impl Into<String>) -> LabelSet {
        let removed: Vec<&str> = self
            .0
            .iter()
            .filter(|(from, to)| from != to)
            .map(|(from, _)| from.as_str())
            .collect();
        set.without(name, &removed)
    }
}

/// Replaces each label by its mapped value when present.
pub fn consolidate_labels(note: &LabeledNote, mapping: &ConsolidationMap) -> LabeledNote {
    LabeledNote {
        note_id: note.note_id.clone(),
        lines: note.lines.clone(),
        labels: note
            .labels
            .iter()
            .map(|l| mapping.apply(l).to_string())
            .collect(),
    }
}

/// Lines removed by [`restrict_label_set`], tallied per gold label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub per_label: BTreeMap<String, usize>,
    pub total_lines: usize,
    /// Notes left with no lines after exclusion; they are dropped.
    pub emptied_notes: Vec<String>,
}

/// Removes lines whose gold label is not in `allowed`.
pub fn restrict_label_set(
    dataset: &[LabeledNote],
    allowed: &LabelSet,
) -> (Vec<LabeledNote>, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut out = Vec::with_capacity(dataset.len());
    for note in dataset {
        let mut lines = Vec::with_capacity(note.lines.len());
        let mut labels = Vec::with_capacity(note.labels.len());
        for (line, label) in note.lines.iter().zip(&note.labels) {
            if allowed.contains(label) {
                lines.push(line.clone());
                labels.push(label.clone());
            } else {
                *report.per_label.entry(label.clone()).or_default() += 1;
                report.total_lines += 1;
            }
        }
        if lines.is_empty() && !note.lines.is_empty() {
            report.emptied_notes.push(note.note_id.clone());
            continue;
        }
        out.push(LabeledNote {
            note_id: note.note_id.clone(),
            lines,
            labels,
        });
    }
    (out, report)
}

/// One line pulled out of its note for line-level training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinePair {
    pub note_id: String,
    pub line_index: usize,
    pub note_length: usize,
    pub text: String,
    pub label: String,
}

fn train_count(n: usize, fraction: f64) -> Result<usize, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    Ok(((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize)
}

/// Pools every line, shuffles with a seeded ChaCha8 stream and cuts off
/// `floor(fraction * N)` lines for training.
pub fn split_line_level(
    dataset: &[LabeledNote],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LinePair>, Vec<LinePair>), CorpusError> {
    let mut pool: Vec<LinePair> = dataset
        .iter()
        .flat_map(|note| {
            let n = note.lines.len();
            note.lines
                .iter()
                .zip(&note.labels)
                .enumerate()
                .map(move |(i, (text, label))| LinePair {
                    note_id: note.note_id.clone(),
                    line_index: i,
                    note_length: n,
                    text: text.clone(),
                    label: label.clone(),
                })
        })
        .collect();
    if pool.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let k = train_count(pool.len(), train_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let eval = pool.split_off(k);
    Ok((pool, eval))
}

/// Note-level counterpart of [`split_line_level`], used for the CRF where a
/// note is the training unit. Both halves keep their original note order.
pub fn split_note_level<T: Clone>(
    dataset: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let k = train_count(dataset.len(), train_fraction)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; dataset.len()];
    for &i in &order[..k] {
        in_train[i] = true;
    }
    let (train, eval): (Vec<_>, Vec<_>) = dataset
        .iter()
        .zip(in_train)
        .partition(|(_, is_train)| *is_train);
    Ok((
        train.into_iter().map(|(n, _)| n.clone()).collect(),
        eval.into_iter().map(|(n, _)| n.clone()).collect(),
    ))
}

/// Drops notes with more than `max_lines` lines.
pub fn filter_notes_by_length<T: HasLines + Clone>(dataset: &[T], max_lines: usize) -> Vec<T> {
    dataset
        .iter()
        .filter(|n| n.line_count() <= max_lines)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub label: String,
    pub span_count: usize,
    pub overall_percent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub rows: Vec<FrequencyRow>,
    pub total_spans: usize,
}

impl FrequencyReport {
    pub fn render(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("Section Header".len());
        let mut out = format!("{:<width$}  {:>11}  {:>9}\n", "Section Header", "Total Spans", "Overall %");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>11}  {:>9.2}\n",
                row.label, row.span_count, row.overall_percent
            ));
        }
        out.push_str(&format!("{:<width$}  {:>11}\n", "total", self.total_spans));
        out
    }
}

/// `100 * part / whole` rounded half-up to hundredths, computed in integers.
pub fn percent_half_up(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        return 0.0;
    }
    let (part, whole) = (part as u128, whole as u128);
    let hundredths = (20_000 * part + whole) / (2 * whole);
    hundredths as f64 / 100.0
}

/// Span counts per label (outside spans excluded), most frequent first.
pub fn corpus_stats(dataset: &[SpanNote]) -> FrequencyReport {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for note in dataset {
        for span in &note.spans {
            if span.label != OUTSIDE {
                *counts.entry(span.label.as_str()).or_default() += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    let mut rows: Vec<FrequencyRow> = counts
        .into_iter()
        .map(|(label, count)| FrequencyRow {
            label: label.to_string(),
            span_count: count,
            overall_percent: percent_half_up(count, total),
        })
        .collect();
    rows.sort_by(|a, b| b.span_count.cmp(&a.span_count).then_with(|| a.label.cmp(&b.label)));
    FrequencyReport {
        rows,
        total_spans: total,
    }
}
