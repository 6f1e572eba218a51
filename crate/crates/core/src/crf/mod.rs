//! Linear-chain CRF on top of a line encoder. One note is one training
//! instance; its lines are scored independently and then decoded jointly.

mod inference;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelSet, LabeledNote, Note};
use crate::encoders::sgd::ScaledParams;
use crate::encoders::{
    extract_features, tokenize_and_truncate, EncoderError, EncoderKind, EncoderParams, FeatureConfig, LineInput,
};

pub use inference::{
    chain_nll_and_gradient, log_partition, marginals, path_score, viterbi_decode, ChainGradient, Marginals,
    TransitionMatrix,
};

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("note {0} has no lines")]
    EmptyNote(String),
    #[error("note {0} has no gold labels")]
    MissingGold(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("note {note_id}: label {label} is not in the label set")]
    UnknownLabel { note_id: String, label: String },
    #[error("note {note_id}: {lines} lines but {labels} labels")]
    LengthMismatch {
        note_id: String,
        lines: usize,
        labels: usize,
    },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("{0:?} encoder needs precomputed line inputs")]
    NeedsInputs(EncoderKind),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// One note shaped `(B, L, S)` with `B = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollatedNote {
    pub note_id: String,
    pub lines: Vec<String>,
    pub tokens: Vec<Vec<String>>,
    pub max_tokens: usize,
    pub gold: Option<Vec<String>>,
}

impl CollatedNote {
    pub fn shape(&self) -> (usize, usize, usize) {
        (1, self.lines.len(), self.max_tokens)
    }
}

pub trait Collatable {
    fn note_id(&self) -> &str;
    fn lines(&self) -> &[String];
    fn gold(&self) -> Option<&[String]>;
}

impl Collatable for Note {
    fn note_id(&self) -> &str {
        &self.note_id
    }
    fn lines(&self) -> &[String] {
        &self.lines
    }
    fn gold(&self) -> Option<&[String]> {
        None
    }
}

impl Collatable for LabeledNote {
    fn note_id(&self) -> &str {
        &self.note_id
    }
    fn lines(&self) -> &[String] {
        &self.lines
    }
    fn gold(&self) -> Option<&[String]> {
        Some(&self.labels)
    }
}

pub fn collate<N: Collatable>(note: &N, max_tokens: usize) -> Result<CollatedNote, CrfError> {
    let lines = note.lines();
    if lines.is_empty() {
        return Err(CrfError::EmptyNote(note.note_id().to_string()));
    }
    if let Some(gold) = note.gold() {
        if gold.len() != lines.len() {
            return Err(CrfError::LengthMismatch {
                note_id: note.note_id().to_string(),
                lines: lines.len(),
                labels: gold.len(),
            });
        }
    }
    Ok(CollatedNote {
        note_id: note.note_id().to_string(),
        lines: lines.to_vec(),
        tokens: lines.iter().map(|l| tokenize_and_truncate(l, max_tokens)).collect(),
        max_tokens,
        gold: note.gold().map(<[String]>::to_vec),
    })
}

/// Hashed feature inputs for every line of a collated note.
pub fn feature_inputs(collated: &CollatedNote, features: &FeatureConfig) -> Vec<LineInput> {
    let config = FeatureConfig {
        max_tokens: collated.max_tokens,
        ..*features
    };
    let n = collated.lines.len();
    collated
        .lines
        .iter()
        .enumerate()
        .map(|(i, line)| LineInput::Sparse(extract_features(line, i, n, &config)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub encoder: EncoderParams,
    pub transitions: TransitionMatrix,
    pub label_set: LabelSet,
    pub features: FeatureConfig,
}

impl CrfModel {
    pub fn zeros(label_set: LabelSet, kind: EncoderKind, dim: usize, features: FeatureConfig) -> Self {
        let n = label_set.len();
        Self {
            encoder: EncoderParams::zeros(kind, n, dim),
            transitions: TransitionMatrix::zeros(n),
            label_set,
            features,
        }
    }

    pub fn validate(&self) -> Result<(), CrfError> {
        let n = self.label_set.len();
        if self.encoder.n_labels() != n || self.transitions.n_labels() != n || !self.transitions.is_consistent() {
            return Err(CrfError::Inconsistent(format!(
                "label set has {n} labels, encoder {}, transitions {}",
                self.encoder.n_labels(),
                self.transitions.n_labels()
            )));
        }
        if self.encoder.kind() == EncoderKind::FeatureLinear
            && self.encoder.dim() != self.features.feature_space_size as usize
        {
            return Err(CrfError::Inconsistent(format!(
                "encoder dim {} differs from feature space {}",
                self.encoder.dim(),
                self.features.feature_space_size
            )));
        }
        self.encoder.check_finite()?;
        if !self.transitions.is_finite() {
            return Err(CrfError::Encoder(EncoderError::NonFinite));
        }
        Ok(())
    }
}

/// Stacks per-line emission rows into an `L x |Y|` matrix.
pub fn emissions_from_inputs(encoder: &EncoderParams, inputs: &[LineInput]) -> Result<Array2<f64>, CrfError> {
    let mut out = Array2::zeros((inputs.len(), encoder.n_labels()));
    for (l, x) in inputs.iter().enumerate() {
        for (j, s) in encoder.emission_scores(x)?.into_iter().enumerate() {
            out[[l, j]] = s;
        }
    }
    Ok(out)
}

pub fn note_emissions(model: &CrfModel, collated: &CollatedNote) -> Result<Array2<f64>, CrfError> {
    if model.encoder.kind() != EncoderKind::FeatureLinear {
        return Err(CrfError::NeedsInputs(model.encoder.kind()));
    }
    emissions_from_inputs(&model.encoder, &feature_inputs(collated, &model.features))
}

/// Gradient of the note NLL, aligned with [`CrfModel`]'s parameters.
#[derive(Debug, Clone)]
pub struct CrfGradient {
    /// Feature column to per-label gradient; absent columns are zero.
    pub encoder: BTreeMap<u32, Vec<f64>>,
    pub transitions: TransitionMatrix,
}

fn gold_indices(label_set: &LabelSet, note_id: &str, gold: &[String]) -> Result<Vec<usize>, CrfError> {
    gold.iter()
        .map(|g| {
            label_set.index_of(g).ok_or_else(|| CrfError::UnknownLabel {
                note_id: note_id.to_string(),
                label: g.clone(),
            })
        })
        .collect()
}

fn chain_to_crf_gradient(inputs: &[LineInput], chain: ChainGradient) -> CrfGradient {
    let mut encoder: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let n_labels = chain.transitions.n_labels();
    for (l, x) in inputs.iter().enumerate() {
        let row = chain.emissions.row(l);
        x.for_each_nonzero(|f, v| {
            let col = encoder.entry(f).or_insert_with(|| vec![0.0; n_labels]);
            col.iter_mut().zip(row.iter()).for_each(|(c, g)| *c += g * v);
        });
    }
    CrfGradient {
        encoder,
        transitions: chain.transitions,
    }
}

/// NLL of the gold path given precomputed line inputs.
pub fn nll_and_gradient_from_inputs(
    encoder: &EncoderParams,
    transitions: &TransitionMatrix,
    inputs: &[LineInput],
    gold: &[usize],
) -> Result<(f64, CrfGradient), CrfError> {
    let emissions = emissions_from_inputs(encoder, inputs)?;
    let (loss, chain) = chain_nll_and_gradient(&emissions, transitions, gold);
    Ok((loss, chain_to_crf_gradient(inputs, chain)))
}

pub fn nll_and_gradient(model: &CrfModel, collated: &CollatedNote) -> Result<(f64, CrfGradient), CrfError> {
    let gold = collated
        .gold
        .as_deref()
        .ok_or_else(|| CrfError::MissingGold(collated.note_id.clone()))?;
    let gold = gold_indices(&model.label_set, &collated.note_id, gold)?;
    if model.encoder.kind() != EncoderKind::FeatureLinear {
        return Err(CrfError::NeedsInputs(model.encoder.kind()));
    }
    let inputs = feature_inputs(collated, &model.features);
    nll_and_gradient_from_inputs(&model.encoder, &model.transitions, &inputs, &gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub max_tokens: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.05,
            l2: 1e-4,
            seed: 42,
            max_tokens: crate::encoders::DEFAULT_MAX_TOKENS,
        }
    }
}

/// A training instance: encoder inputs for every line plus gold indices.
#[derive(Debug, Clone)]
pub struct CrfInstance {
    pub inputs: Vec<LineInput>,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainedCrf {
    pub model: CrfModel,
    /// Mean NLL over the training notes at initialization, then after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Hashes every note into features and resolves gold indices.
pub fn featurize_notes(
    dataset: &[LabeledNote],
    label_set: &LabelSet,
    features: &FeatureConfig,
    max_tokens: usize,
) -> Result<Vec<CrfInstance>, CrfError> {
    dataset
        .iter()
        .map(|note| {
            let collated = collate(note, max_tokens)?;
            let gold = gold_indices(label_set, &note.note_id, &note.labels)?;
            Ok(CrfInstance {
                inputs: feature_inputs(&collated, features),
                gold,
            })
        })
        .collect()
}

/// Per-note SGD on the hashed feature encoder, from all-zero weights.
pub fn train_crf(
    dataset: &[LabeledNote],
    label_set: &LabelSet,
    features: &FeatureConfig,
    config: &CrfConfig,
) -> Result<TrainedCrf, CrfError> {
    if dataset.is_empty() {
        return Err(CrfError::EmptyTrainingSet);
    }
    let features = FeatureConfig {
        max_tokens: config.max_tokens,
        ..*features
    };
    let instances = featurize_notes(dataset, label_set, &features, config.max_tokens)?;
    let model = CrfModel::zeros(
        label_set.clone(),
        EncoderKind::FeatureLinear,
        features.feature_space_size as usize,
        features,
    );
    train_crf_on_instances(model, &instances, config)
}

/// Per-note SGD from `init`; the loop shared by every encoder kind.
pub fn train_crf_on_instances(
    init: CrfModel,
    instances: &[CrfInstance],
    config: &CrfConfig,
) -> Result<TrainedCrf, CrfError> {
    if instances.is_empty() {
        return Err(CrfError::EmptyTrainingSet);
    }
    if !(config.learning_rate > 0.0) || config.l2 < 0.0 {
        return Err(CrfError::InvalidConfig(format!("{config:?}")));
    }
    init.validate()?;
    let CrfModel {
        encoder,
        mut transitions,
        label_set,
        features,
    } = init;
    let mut encoder = ScaledParams::new(encoder);
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.l2;

    let mean_nll = |encoder: &ScaledParams, transitions: &TransitionMatrix| -> Result<f64, CrfError> {
        let mut total = 0.0;
        for inst in instances {
            total += instance_nll(encoder, transitions, inst)?;
        }
        Ok(total / instances.len() as f64)
    };

    let mut loss_trace = vec![mean_nll(&encoder, &transitions)?];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let inst = &instances[i];
            let emissions = scaled_emissions(&encoder, &inst.inputs)?;
            let (_, chain) = chain_nll_and_gradient(&emissions, &transitions, &inst.gold);
            let grad = chain_to_crf_gradient(&inst.inputs, chain);

            encoder.decay(decay);
            for (f, g) in &grad.encoder {
                let delta: Vec<f64> = g.iter().map(|g| -lr * g).collect();
                encoder.add_to_column(*f, &delta);
            }
            let t = &grad.transitions;
            transitions.scores.zip_mut_with(&t.scores, |w, g| *w = decay * *w - lr * g);
            transitions.start.zip_mut_with(&t.start, |w, g| *w = decay * *w - lr * g);
            transitions.end.zip_mut_with(&t.end, |w, g| *w = decay * *w - lr * g);
        }
        let loss = mean_nll(&encoder, &transitions)?;
        tracing::debug!(epoch = epoch + 1, loss, "crf epoch");
        loss_trace.push(loss);
    }

    let model = CrfModel {
        encoder: encoder.into_params(),
        transitions,
        label_set,
        features,
    };
    model.validate()?;
    Ok(TrainedCrf { model, loss_trace })
}

fn scaled_emissions(encoder: &ScaledParams, inputs: &[LineInput]) -> Result<Array2<f64>, CrfError> {
    let mut out = Array2::zeros((inputs.len(), 0));
    for (l, x) in inputs.iter().enumerate() {
        let row = encoder.emission_scores(x)?;
        if l == 0 {
            out = Array2::zeros((inputs.len(), row.len()));
        }
        for (j, s) in row.into_iter().enumerate() {
            out[[l, j]] = s;
        }
    }
    Ok(out)
}

fn instance_nll(encoder: &ScaledParams, transitions: &TransitionMatrix, inst: &CrfInstance) -> Result<f64, CrfError> {
    let emissions = scaled_emissions(encoder, &inst.inputs)?;
    Ok(log_partition(&emissions, transitions) - path_score(&emissions, transitions, &inst.gold))
}

/// Viterbi label indices for precomputed line inputs.
pub fn predict_inputs(model: &CrfModel, inputs: &[LineInput]) -> Result<Vec<usize>, CrfError> {
    let emissions = emissions_from_inputs(&model.encoder, inputs)?;
    Ok(viterbi_decode(&emissions, &model.transitions).0)
}

/// Collate, score and decode one note; one label slug per line.
pub fn predict_note<N: Collatable>(model: &CrfModel, note: &N, max_tokens: usize) -> Result<Vec<String>, CrfError> {
    let collated = collate(note, max_tokens)?;
    let emissions = note_emissions(model, &collated)?;
    let (path, _) = viterbi_decode(&emissions, &model.transitions);
    Ok(path.into_iter().map(|y| model.label_set.label(y).to_string()).collect())
}
