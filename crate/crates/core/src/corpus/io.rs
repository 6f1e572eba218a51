use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledNote, Note, SpanNote, OUTSIDE};
use crate::jsonl::{self, JsonlError};

impl From<JsonlError> for CorpusError {
    fn from(err: JsonlError) -> Self {
        match err {
            JsonlError::Io { path, source } => CorpusError::Io { path, source },
            JsonlError::Record {
                path,
                record,
                message,
            } => CorpusError::Record {
                record,
                message: format!("{path}: {message}"),
            },
        }
    }
}

/// Serialized IO tag for a bare slug: `<none>` stays as is, anything else
/// gets the `I_` prefix.
pub fn to_io_tag(label: &str) -> String {
    if label == OUTSIDE {
        OUTSIDE.to_string()
    } else {
        format!("I_{label}")
    }
}

pub fn from_io_tag(tag: &str) -> Option<&str> {
    if tag == OUTSIDE {
        Some(OUTSIDE)
    } else {
        tag.strip_prefix("I_").filter(|s| !s.is_empty())
    }
}

/// On-disk line-level record; labels use IO tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNoteRecord {
    pub note_id: String,
    pub lines: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl From<&LabeledNote> for LabeledNoteRecord {
    fn from(note: &LabeledNote) -> Self {
        Self {
            note_id: note.note_id.clone(),
            lines: note.lines.clone(),
            labels: Some(note.labels.iter().map(|l| to_io_tag(l)).collect()),
        }
    }
}

pub fn read_span_notes(path: impl AsRef<Path>) -> Result<Vec<SpanNote>, CorpusError> {
    Ok(jsonl::read(path.as_ref())?)
}

/// Reads line-level JSONL, stripping IO prefixes. Every record must carry labels.
pub fn read_labeled_notes(path: impl AsRef<Path>) -> Result<Vec<LabeledNote>, CorpusError> {
    let path = path.as_ref();
    let records: Vec<(usize, LabeledNoteRecord)> = jsonl::read_records(path)?;
    records
        .into_iter()
        .map(|(line, rec)| {
            let tags = rec.labels.ok_or_else(|| CorpusError::Record {
                record: line,
                message: format!("note {} has no labels", rec.note_id),
            })?;
            let labels = tags
                .iter()
                .map(|t| {
                    from_io_tag(t).map(str::to_string).ok_or_else(|| CorpusError::Record {
                        record: line,
                        message: format!("'{t}' is not an IO tag"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            LabeledNote::new(rec.note_id, rec.lines, labels)
        })
        .collect()
}

/// Reads line-level JSONL as unlabeled notes; labels, if present, are ignored.
pub fn read_notes(path: impl AsRef<Path>) -> Result<Vec<Note>, CorpusError> {
    let records: Vec<LabeledNoteRecord> = jsonl::read(path.as_ref())?;
    Ok(records
        .into_iter()
        .map(|r| Note {
            note_id: r.note_id,
            category: None,
            lines: r.lines,
        })
        .collect())
}

pub fn write_labeled_notes(path: impl AsRef<Path>, notes: &[LabeledNote]) -> Result<(), CorpusError> {
    let records: Vec<LabeledNoteRecord> = notes.iter().map(LabeledNoteRecord::from).collect();
    Ok(jsonl::write(path.as_ref(), &records)?)
}
