use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;
use crate::corpus::{LabelSet, Note};

const SYSTEM_PROMPT: &str = "You are a clinical assistant specializing in segmenting clinical notes.";

const TASK_INTRO: &str = "Your task is to assign section headers to each line of a clinical note. \
Most of the section headers will likely span multiple lines, so headers should be assigned \
sequentially and consistently.";

const SELECT_INSTRUCTION: &str =
    "Select the most appropriate section header for each line from the following options:";

const RETURN_INSTRUCTION: &str =
    "Return your answer as a list of section headers, one for each line, in the same order.";

const EXAMPLE_OUTPUT: &str = "Example Output:
Line 0: <none>
Line 1: imaging
Line 2: <none>
Line 3: chief-complaint
Line 4: history-of-present-illness
Line 5: history-of-present-illness
Line 6: history-of-present-illness
Line 7: history-of-present-illness
Line 8: history-of-present-illness
Line 9: history-of-present-illness
...";

const ASSISTANT_PREFIX: &str = "Section Headers:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Llama,
    Mistral,
    Qwen,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Llama, Family::Mistral, Family::Qwen];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Llama => "llama",
            Family::Mistral => "mistral",
            Family::Qwen => "qwen",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "llama" => Ok(Family::Llama),
            "mistral" => Ok(Family::Mistral),
            "qwen" => Ok(Family::Qwen),
            other => Err(format!("unknown model family {other:?} (expected llama, mistral or qwen)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub family: Family,
    pub messages: Vec<ChatMessage>,
    pub expected_line_count: usize,
    pub label_set_name: String,
}

impl PromptBundle {
    /// Hex SHA-256 of the serialized message list.
    pub fn prompt_sha256(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Output budget: eight tokens per line plus slack.
    pub fn max_output_tokens(&self) -> usize {
        8 * self.expected_line_count + 64
    }

    /// The prompt as the family's raw chat template, ending at the point
    /// where the assistant starts answering.
    pub fn render_template(&self) -> String {
        let system = self
            .messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>();
        let user = self
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        match self.family {
            Family::Llama => format!(
                "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n{}\n\n<|eot_id|>\
                 <|start_header_id|>user<|end_header_id|>\n{}\n\n<|eot_id|>\
                 <|start_header_id|>assistant<|end_header_id|>\n{ASSISTANT_PREFIX}",
                system.join("\n\n"),
                user
            ),
            // the system text is already folded into the user turn
            Family::Mistral => format!("<s>[INST] {user} [/INST]{ASSISTANT_PREFIX}"),
            Family::Qwen => format!(
                "<|im_start|>system\n{}<|im_end|>\n<|im_start|>user\n{}<|im_end|>\n\
                 <|im_start|>assistant\n{ASSISTANT_PREFIX}",
                system.join("\n\n"),
                user
            ),
        }
    }
}

/// Lines numbered from zero, one per row.
pub fn enumerate_lines(lines: &[String]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("Line {i}: {l}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn task_text(note: &Note, label_set: &LabelSet) -> String {
    format!(
        "{TASK_INTRO}\n\nClinical Note:\n{}\n\n{SELECT_INSTRUCTION}\n{}\n\n{RETURN_INSTRUCTION}\n\n{EXAMPLE_OUTPUT}\n\n\
         The output must contain **exactly the same number of lines** as the clinical note, i.e., \
         number of lines SHOULD BE EQUAL TO {}",
        enumerate_lines(&note.lines),
        label_set.labels().join(", "),
        note.lines.len()
    )
}

/// The segmentation prompt for one note. The task text is identical across
/// families; only the role framing differs.
pub fn build_prompt(note: &Note, label_set: &LabelSet, family: Family) -> Result<PromptBundle, LlmError> {
    if note.lines.is_empty() {
        return Err(LlmError::EmptyNote(note.note_id.clone()));
    }
    let task = task_text(note, label_set);
    let messages = match family {
        Family::Llama | Family::Qwen => vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(task)],
        Family::Mistral => vec![ChatMessage::user(format!("{SYSTEM_PROMPT}\n\n{task}"))],
    };
    Ok(PromptBundle {
        family,
        messages,
        expected_line_count: note.lines.len(),
        label_set_name: label_set.name().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(n: usize) -> Note {
        Note {
            note_id: "n1".into(),
            category: None,
            lines: (0..n).map(|i| format!("text {i}")).collect(),
        }
    }

    #[test]
    fn three_line_note() {
        let b = build_prompt(&note(3), &LabelSet::onc(), Family::Llama).unwrap();
        let user = &b.messages[1].content;
        assert!(user.contains("SHOULD BE EQUAL TO 3"));
        for i in 0..3 {
            assert!(user.contains(&format!("Line {i}: text {i}")));
        }
        assert!(user.contains("exactly the same number of lines"));
        assert!(user.contains("Line 0: <none>\nLine 1: imaging"));
        assert_eq!(b.expected_line_count, 3);
    }

    #[test]
    fn family_changes_framing_only() {
        let labels = LabelSet::onc();
        let llama = build_prompt(&note(2), &labels, Family::Llama).unwrap();
        let qwen = build_prompt(&note(2), &labels, Family::Qwen).unwrap();
        let mistral = build_prompt(&note(2), &labels, Family::Mistral).unwrap();
        assert_eq!(llama.messages, qwen.messages);
        assert!(mistral.messages[0].content.ends_with(&llama.messages[1].content));
        assert!(qwen.render_template().starts_with("<|im_start|>system"));
        assert!(mistral.render_template().starts_with("<s>[INST] "));
    }

    #[test]
    fn empty_note_rejected() {
        assert!(matches!(
            build_prompt(&note(0), &LabelSet::onc(), Family::Qwen),
            Err(LlmError::EmptyNote(_))
        ));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Mistral".parse::<Family>().unwrap(), Family::Mistral);
        assert!("gpt".parse::<Family>().is_err());
    }
}
