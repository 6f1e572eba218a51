use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::prompt::ChatMessage;
use super::LlmError;
use crate::http::{self, HttpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionClientConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    /// Overrides the per-note `8 * L + 64` budget when set.
    #[serde(default)]
    pub max_output_tokens: Option<usize>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// First backoff delay; doubles on every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Falls back to `SECTIONSEG_API_KEY` when unset.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    120_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_in_flight() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    500
}

impl CompletionClientConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff_ms(),
            api_key: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig(format!("temperature {} < 0", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    /// Attempts beyond the first.
    pub retries: u32,
}

/// Anything that turns a message list into assistant text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<Completion, LlmError>;

    /// Requests allowed in flight at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: usize,
}

/// Exact bytes POSTed to `/v1/chat/completions`.
pub fn chat_request_body(model: &str, messages: &[ChatMessage], temperature: f64, max_tokens: usize) -> String {
    serde_json::to_string(&ChatRequest {
        model,
        messages,
        temperature,
        max_tokens,
    })
    .expect("plain strings serialize")
}

fn extract_content(value: &serde_json::Value) -> Result<String, HttpError> {
    value
        .pointer("/choices/0/message/content")
        .map(|c| c.as_str().unwrap_or_default().to_string())
        .ok_or_else(|| HttpError::Decode("response has no choices[0].message.content".into()))
}

/// Blocking client for any OpenAI-compatible chat endpoint.
pub struct HttpChatClient {
    config: CompletionClientConfig,
    client: Client,
    url: String,
    api_key: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: CompletionClientConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = http::build_client(Duration::from_millis(config.timeout_ms))?;
        let url = http::endpoint(&config.base_url, "v1/chat/completions");
        let api_key = config.api_key.clone().or_else(http::api_key_from_env);
        Ok(Self {
            config,
            client,
            url,
            api_key,
        })
    }

    pub fn config(&self) -> &CompletionClientConfig {
        &self.config
    }
}

impl ChatClient for HttpChatClient {
    /// Retries transport failures, 429/5xx and empty content up to
    /// `max_retries` times with exponential backoff.
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<Completion, LlmError> {
        let max_tokens = self.config.max_output_tokens.unwrap_or(max_tokens);
        let body = chat_request_body(&self.config.model_name, messages, self.config.temperature, max_tokens);
        let mut attempt: u32 = 0;
        loop {
            let outcome = http::post_json(&self.client, &self.url, self.api_key.as_deref(), body.clone().into_bytes())
                .and_then(|v| extract_content(&v));
            let err = match outcome {
                Ok(content) if !content.trim().is_empty() => {
                    return Ok(Completion {
                        content,
                        retries: attempt,
                    })
                }
                Ok(_) => LlmError::EmptyCompletion { attempts: attempt + 1 },
                Err(e) if e.is_retryable() => LlmError::from(e),
                Err(e) => return Err(e.into()),
            };
            if attempt >= self.config.max_retries {
                return Err(err);
            }
            let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
            tracing::warn!(attempt = attempt + 1, delay_ms = delay, "chat request failed: {err}");
            std::thread::sleep(Duration::from_millis(delay));
            attempt += 1;
        }
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}
