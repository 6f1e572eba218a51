use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{LabeledNote, OUTSIDE};
use crate::http;
use crate::llm::{normalize_header, ChatClient, ChatMessage};

/// Bumped whenever the classification prompt text changes.
pub const ERROR_PROMPT_VERSION: &str = "error-categories/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Omission,
    LabelConfusion,
    ValidLocalInterpretation,
    Other,
}

impl ErrorCategory {
    fn from_reply(reply: &str) -> Option<Self> {
        let first = reply.lines().find(|l| !l.trim().is_empty())?;
        match normalize_header(first).as_str() {
            "label-confusion" => Some(Self::LabelConfusion),
            "valid-local-interpretation" => Some(Self::ValidLocalInterpretation),
            "other" => Some(Self::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub note_id: String,
    pub line_index: usize,
    pub gold: String,
    pub predicted: String,
    pub category: ErrorCategory,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub omission: usize,
    pub label_confusion: usize,
    pub valid_local_interpretation: usize,
    pub other: usize,
    pub records: Vec<ErrorRecord>,
    /// No classifier was available: every non-omission error is `other`.
    pub rule_only: bool,
}

impl ErrorBreakdown {
    pub fn total(&self) -> usize {
        self.omission + self.label_confusion + self.valid_local_interpretation + self.other
    }
}

pub fn error_prompt(line: &str, gold: &str, predicted: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system("You review errors made by a clinical note section labeler."),
        ChatMessage::user(format!(
            "A line from a clinical note was assigned the wrong section header.\n\n\
             Line: {line}\nCorrect header: {gold}\nPredicted header: {predicted}\n\n\
             Classify the error as one of:\n\
             label_confusion - the predicted header is clearly wrong for this line\n\
             valid_local_interpretation - read on its own, the line plausibly fits the predicted header\n\
             other - ambiguous or fits neither description\n\n\
             Reply with the category name only."
        )),
    ]
}

/// Splits mismatched lines into the four categories. Omissions are decided
/// by rule; the rest go to `client`, and any failure or off-list reply
/// becomes `other`.
pub fn categorize_errors(
    dataset: &[LabeledNote],
    predictions: &[Vec<String>],
    client: Option<&dyn ChatClient>,
) -> Result<ErrorBreakdown, EvalError> {
    if dataset.len() != predictions.len() {
        return Err(EvalError::NoteCountMismatch {
            gold: dataset.len(),
            predicted: predictions.len(),
        });
    }
    let mut pending: Vec<(usize, &str, &str, &str, &str)> = Vec::new();
    for (note, pred) in dataset.iter().zip(predictions) {
        if note.labels.len() != pred.len() {
            return Err(EvalError::LengthMismatch {
                note_id: note.note_id.clone(),
                gold: note.labels.len(),
                predicted: pred.len(),
            });
        }
        for (i, (g, p)) in note.labels.iter().zip(pred).enumerate() {
            if g != p {
                pending.push((i, &note.note_id, &note.lines[i], g, p));
            }
        }
    }

    let in_flight = client.map_or(1, |c| c.max_in_flight());
    let categories = http::bounded_map(&pending, in_flight, |&(_, note_id, line, gold, predicted)| {
        if gold != OUTSIDE && predicted == OUTSIDE {
            return ErrorCategory::Omission;
        }
        let Some(client) = client else {
            return ErrorCategory::Other;
        };
        match client.complete(&error_prompt(line, gold, predicted), 16) {
            Ok(reply) => ErrorCategory::from_reply(&reply.content).unwrap_or_else(|| {
                tracing::warn!(note_id, reply = %reply.content, "unrecognized error category");
                ErrorCategory::Other
            }),
            Err(e) => {
                tracing::warn!(note_id, "error classification failed: {e}");
                ErrorCategory::Other
            }
        }
    });

    let mut out = ErrorBreakdown {
        rule_only: client.is_none(),
        ..Default::default()
    };
    for ((line_index, note_id, _, gold, predicted), category) in pending.into_iter().zip(categories) {
        match category {
            ErrorCategory::Omission => out.omission += 1,
            ErrorCategory::LabelConfusion => out.label_confusion += 1,
            ErrorCategory::ValidLocalInterpretation => out.valid_local_interpretation += 1,
            ErrorCategory::Other => out.other += 1,
        }
        out.records.push(ErrorRecord {
            note_id: note_id.to_string(),
            line_index,
            gold: gold.to_string(),
            predicted: predicted.to_string(),
            category,
        });
    }
    Ok(out)
}
