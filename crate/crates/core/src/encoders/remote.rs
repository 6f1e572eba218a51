//! Client for an OpenAI-style `/v1/embeddings` endpoint, used as a drop-in
//! dense line encoder.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::http::{self, HttpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub base_url: String,
    pub model_name: String,
    pub embed_dim: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Lines per request.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Falls back to `SECTIONSEG_API_KEY` when unset.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

fn default_batch() -> usize {
    64
}

impl EmbeddingProviderConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>, embed_dim: usize) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            embed_dim,
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_in_flight(),
            batch_size: default_batch(),
            api_key: None,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.embed_dim == 0 || self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(EncoderError::InvalidConfig(
                "embed_dim, max_in_flight and batch_size must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// Exact bytes POSTed for one batch.
pub fn embedding_request_body(model: &str, lines: &[String]) -> String {
    serde_json::to_string(&EmbeddingRequest { model, input: lines }).expect("plain strings serialize")
}

/// Embeds every line, one vector of `embed_dim` per line in input order.
/// Each batch is retried once on a retryable failure.
pub fn remote_embed(
    config: &EmbeddingProviderConfig,
    lines: &[String],
) -> Result<Vec<Vec<f64>>, EncoderError> {
    config.validate()?;
    if lines.is_empty() {
        return Ok(Vec::new());
    }
    let client = http::build_client(Duration::from_millis(config.timeout_ms))?;
    let url = http::endpoint(&config.base_url, "v1/embeddings");
    let api_key = config.api_key.clone().or_else(http::api_key_from_env);

    let batches: Vec<&[String]> = lines.chunks(config.batch_size).collect();
    let results = http::bounded_map(&batches, config.max_in_flight, |batch| {
        let send = || -> Result<Vec<Vec<f64>>, EncoderError> {
            let body = embedding_request_body(&config.model_name, batch).into_bytes();
            let value = http::post_json(&client, &url, api_key.as_deref(), body)?;
            decode_batch(value, batch.len(), config.embed_dim)
        };
        match send() {
            Err(e) if e.is_retryable() => {
                tracing::warn!("embedding request failed, retrying once: {e}");
                send()
            }
            other => other,
        }
    });

    let mut out = Vec::with_capacity(lines.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn decode_batch(
    value: serde_json::Value,
    expected: usize,
    embed_dim: usize,
) -> Result<Vec<Vec<f64>>, EncoderError> {
    let response: EmbeddingResponse =
        serde_json::from_value(value).map_err(|e| EncoderError::Http(HttpError::Decode(e.to_string())))?;
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for datum in response.data {
        if datum.embedding.len() != embed_dim {
            return Err(EncoderError::DimensionMismatch {
                expected: embed_dim,
                found: datum.embedding.len(),
            });
        }
        let slot = slots.get_mut(datum.index).ok_or_else(|| {
            EncoderError::Http(HttpError::Decode(format!("embedding index {} out of range", datum.index)))
        })?;
        *slot = Some(datum.embedding);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| EncoderError::Http(HttpError::Decode(format!("missing embedding for input {i}"))))
        })
        .collect()
}
