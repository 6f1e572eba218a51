//! Line encoders: text to per-label emission scores.
//!
//! The built-in encoder hashes engineered features into a sparse vector and
//! projects it linearly; the remote encoder fetches dense embeddings from an
//! embeddings endpoint. Either feeds the per-line classifier or the CRF.

mod classifier;
mod features;
mod params;
mod remote;
pub(crate) mod sgd;

use thiserror::Error;

use crate::http::HttpError;

pub use classifier::{
    classifier_loss_and_gradient, classifier_objective, featurize_pairs, train_line_classifier,
    ClassifierConfig, LabeledInput, TrainedClassifier,
};
pub use features::{
    extract_features, feature_index, fnv1a64, tokenize_and_truncate, FeatureConfig, FeatureVector,
    BIAS_INDEX, DEFAULT_FEATURE_SPACE, DEFAULT_MAX_TOKENS,
};
pub use params::{classify_line, emission_scores, EncoderKind, EncoderParams, LineInput};
pub use remote::{embedding_request_body, remote_embed, EmbeddingProviderConfig};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite weight")]
    NonFinite,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Http(#[from] HttpError),
}

impl EncoderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EncoderError::Http(e) if e.is_retryable())
    }
}
