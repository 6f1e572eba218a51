//! Versioned JSON envelope for trained classifier and CRF models.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::LabelSet;
use crate::crf::{CrfModel, TransitionMatrix};
use crate::encoders::{EncoderKind, EncoderParams, FeatureConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed model file: {message}")]
    Format { path: String, message: String },
    #[error("unsupported model format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Classifier,
    Crf,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Classifier => "classifier",
            Engine::Crf => "crf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_labels: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub engine: Engine,
    pub label_set: LabelSet,
    pub encoder_kind: EncoderKind,
    pub dims: Dims,
    pub feature_config: FeatureConfig,
    pub weights: EncoderParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_scores: Option<Vec<f64>>,
    pub loss_trace: Vec<f64>,
    pub config_fingerprint: String,
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl ModelFile {
    pub fn classifier(
        label_set: LabelSet,
        weights: EncoderParams,
        feature_config: FeatureConfig,
        loss_trace: Vec<f64>,
        config_fingerprint: String,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            engine: Engine::Classifier,
            encoder_kind: weights.kind(),
            dims: Dims {
                n_labels: weights.n_labels(),
                dim: weights.dim(),
            },
            label_set,
            feature_config,
            weights,
            transitions: None,
            start_scores: None,
            end_scores: None,
            loss_trace,
            config_fingerprint,
        }
    }

    pub fn crf(model: CrfModel, loss_trace: Vec<f64>, config_fingerprint: String) -> Self {
        let t = &model.transitions;
        Self {
            format_version: FORMAT_VERSION,
            engine: Engine::Crf,
            encoder_kind: model.encoder.kind(),
            dims: Dims {
                n_labels: model.encoder.n_labels(),
                dim: model.encoder.dim(),
            },
            transitions: Some(t.scores.rows().into_iter().map(|r| r.to_vec()).collect()),
            start_scores: Some(t.start.to_vec()),
            end_scores: Some(t.end.to_vec()),
            label_set: model.label_set,
            feature_config: model.features,
            weights: model.encoder,
            loss_trace,
            config_fingerprint,
        }
    }

    pub fn validate(&self) -> Result<(), ModelFileError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion {
                found: self.format_version,
            });
        }
        let n = self.label_set.len();
        let w = &self.weights;
        if self.dims.n_labels != n || w.n_labels() != n || w.dim() != self.dims.dim || w.kind() != self.encoder_kind {
            return Err(ModelFileError::Inconsistent(format!(
                "label set has {n} labels; dims {:?}; weights {}x{} ({:?})",
                self.dims,
                w.n_labels(),
                w.dim(),
                w.kind()
            )));
        }
        if self.engine == Engine::Crf {
            self.transition_matrix()?;
        }
        Ok(())
    }

    fn transition_matrix(&self) -> Result<TransitionMatrix, ModelFileError> {
        let n = self.label_set.len();
        let missing = || ModelFileError::Inconsistent("crf model lacks transition scores".into());
        let rows = self.transitions.as_ref().ok_or_else(missing)?;
        let start = self.start_scores.as_ref().ok_or_else(missing)?;
        let end = self.end_scores.as_ref().ok_or_else(missing)?;
        if rows.len() != n || rows.iter().any(|r| r.len() != n) || start.len() != n || end.len() != n {
            return Err(ModelFileError::Inconsistent(format!("transition shapes do not match {n} labels")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let t = TransitionMatrix {
            scores: Array2::from_shape_vec((n, n), flat).expect("shape checked"),
            start: Array1::from(start.clone()),
            end: Array1::from(end.clone()),
        };
        if !t.is_finite() {
            return Err(ModelFileError::Inconsistent("non-finite transition score".into()));
        }
        Ok(t)
    }

    pub fn to_crf(&self) -> Result<CrfModel, ModelFileError> {
        if self.engine != Engine::Crf {
            return Err(ModelFileError::Inconsistent(format!("{} model is not a crf", self.engine.as_str())));
        }
        Ok(CrfModel {
            encoder: self.weights.clone(),
            transitions: self.transition_matrix()?,
            label_set: self.label_set.clone(),
            features: self.feature_config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: ModelFile = serde_json::from_str(&text).map_err(|e| ModelFileError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}
