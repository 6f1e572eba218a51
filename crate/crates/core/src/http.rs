//! Blocking JSON-over-HTTP plumbing shared by the embedding and chat clients.

use std::time::Duration;

use reqwest::blocking::Client;
use thiserror::Error;

pub const API_KEY_ENV: &str = "SECTIONSEG_API_KEY";
pub const API_BASE_ENV: &str = "SECTIONSEG_API_BASE";

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl HttpError {
    /// Timeouts, connection failures, 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport { retryable, .. } => *retryable,
            HttpError::Status { code, .. } => *code == 429 || *code >= 500,
            HttpError::Decode(_) => false,
        }
    }
}

pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

/// `flag` if given, otherwise the `SECTIONSEG_API_BASE` environment variable.
pub fn resolve_base_url(flag: Option<&str>) -> Option<String> {
    flag.map(str::to_string)
        .or_else(|| std::env::var(API_BASE_ENV).ok())
        .filter(|s| !s.is_empty())
}

pub(crate) fn endpoint(base_url: &str, path: &str) -> String {
    format!("{}/{}", base_url.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn build_client(timeout: Duration) -> Result<Client, HttpError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| HttpError::Transport {
            message: e.to_string(),
            retryable: false,
        })
}

/// POSTs a pre-serialized JSON body and parses the JSON reply.
pub(crate) fn post_json(
    client: &Client,
    url: &str,
    api_key: Option<&str>,
    body: Vec<u8>,
) -> Result<serde_json::Value, HttpError> {
    let mut request = client
        .post(url)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = request.send().map_err(|e| HttpError::Transport {
        retryable: e.is_timeout() || e.is_connect() || e.is_request(),
        message: e.to_string(),
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| HttpError::Transport {
        retryable: true,
        message: e.to_string(),
    })?;
    if !status.is_success() {
        return Err(HttpError::Status {
            code: status.as_u16(),
            body: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| HttpError::Decode(e.to_string()))
}

/// Runs `f` over `items` on at most `max_in_flight` threads, keeping input order.
pub(crate) fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let threads = max_in_flight.clamp(1, items.len().max(1));
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
