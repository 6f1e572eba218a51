//! Zero-shot segmentation with an instruction-tuned chat model.

mod client;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelSet, Note};
use crate::http::{self, HttpError};

pub use client::{chat_request_body, ChatClient, Completion, CompletionClientConfig, HttpChatClient};
pub use parse::{normalize_header, parse_predictions, reconcile_length, Diagnostics, ParsedPrediction};
pub use prompt::{build_prompt, enumerate_lines, ChatMessage, Family, PromptBundle, Role};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("note {0} has no lines")]
    EmptyNote(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("empty completion after {attempts} attempt(s)")]
    EmptyCompletion { attempts: u32 },
    #[error("no `Line N: header` entries in completion for note {0}")]
    NoParsableLines(String),
    #[error("invalid client config: {0}")]
    InvalidConfig(String),
}

impl From<HttpError> for LlmError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Transport { message, .. } => LlmError::Transport(message),
            HttpError::Status { code, body } => LlmError::HttpStatus { code, body },
            HttpError::Decode(m) => LlmError::Decode(m),
        }
    }
}

/// Builds the prompt and fetches one completion.
pub fn request_completion(client: &dyn ChatClient, bundle: &PromptBundle) -> Result<Completion, LlmError> {
    client.complete(&bundle.messages, bundle.max_output_tokens())
}

/// Outcome for one note. A failed note keeps its error and whatever raw
/// completion was received; it never aborts the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub note_id: String,
    pub family: Family,
    pub prompt_sha256: String,
    pub raw_completion: Option<String>,
    pub retries: u32,
    pub reprompted: bool,
    pub prediction: Option<ParsedPrediction>,
    pub error: Option<String>,
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub note_id: String,
    pub family: Family,
    pub prompt_sha256: String,
    pub raw_completion: Option<String>,
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SegmentationRecord {
    pub fn run_log_entry(&self) -> RunLogEntry {
        RunLogEntry {
            note_id: self.note_id.clone(),
            family: self.family,
            prompt_sha256: self.prompt_sha256.clone(),
            raw_completion: self.raw_completion.clone(),
            diagnostics: self.prediction.as_ref().map(|p| p.diagnostics.clone()),
            error: self.error.clone(),
        }
    }
}

fn segment_one(client: &dyn ChatClient, note: &Note, label_set: &LabelSet, family: Family) -> SegmentationRecord {
    let mut record = SegmentationRecord {
        note_id: note.note_id.clone(),
        family,
        prompt_sha256: String::new(),
        raw_completion: None,
        retries: 0,
        reprompted: false,
        prediction: None,
        error: None,
    };
    let bundle = match build_prompt(note, label_set, family) {
        Ok(b) => b,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.prompt_sha256 = bundle.prompt_sha256();
    let expected = bundle.expected_line_count;

    let mut outcome = attempt(client, &bundle, &mut record);
    if matches!(outcome, Err(LlmError::NoParsableLines(_))) {
        tracing::warn!(note_id = %note.note_id, "no parsable lines, re-prompting once");
        record.reprompted = true;
        outcome = attempt(client, &bundle, &mut record);
    }
    match outcome {
        Ok(parsed) => record.prediction = Some(reconcile_length(parsed, expected)),
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn attempt(
    client: &dyn ChatClient,
    bundle: &PromptBundle,
    record: &mut SegmentationRecord,
) -> Result<ParsedPrediction, LlmError> {
    let completion = request_completion(client, bundle)?;
    record.retries += completion.retries;
    let parsed = parse_predictions(&record.note_id, &completion.content, bundle.expected_line_count);
    record.raw_completion = Some(completion.content);
    parsed
}

/// Segments every note, at most `client.max_in_flight()` at a time. Results
/// follow input order.
pub fn segment_with_llm(
    client: &dyn ChatClient,
    notes: &[Note],
    label_set: &LabelSet,
    family: Family,
) -> Vec<SegmentationRecord> {
    http::bounded_map(notes, client.max_in_flight(), |note| {
        segment_one(client, note, label_set, family)
    })
}
