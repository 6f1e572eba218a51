//! Per-line softmax classifier over encoder outputs (no label transitions).

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureConfig};
use super::params::{EncoderKind, EncoderParams, LineInput};
use super::sgd::ScaledParams;
use super::EncoderError;
use crate::corpus::{LabelSet, LinePair};
use crate::math::{log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            l2: 1e-4,
            batch_size: 64,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub input: LineInput,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub params: EncoderParams,
    /// Full-data objective at initialization, then after every epoch.
    pub loss_trace: Vec<f64>,
}

/// Hashes each line pair into features and resolves its label index.
pub fn featurize_pairs(
    pairs: &[LinePair],
    label_set: &LabelSet,
    features: &FeatureConfig,
) -> Result<Vec<LabeledInput>, EncoderError> {
    pairs
        .iter()
        .map(|p| {
            let label = label_set
                .index_of(&p.label)
                .ok_or_else(|| EncoderError::UnknownLabel(p.label.clone()))?;
            Ok(LabeledInput {
                input: LineInput::Sparse(extract_features(&p.text, p.line_index, p.note_length, features)),
                label,
            })
        })
        .collect()
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2`.
pub fn classifier_objective(
    params: &EncoderParams,
    data: &[LabeledInput],
    l2: f64,
) -> Result<f64, EncoderError> {
    let norm: f64 = params.columns().flat_map(|(_, c)| c.iter()).map(|w| w * w).sum();
    Ok(mean_cross_entropy(|x| params.emission_scores(x), data)? + 0.5 * l2 * norm)
}

fn mean_cross_entropy(
    score: impl Fn(&LineInput) -> Result<Vec<f64>, EncoderError>,
    data: &[LabeledInput],
) -> Result<f64, EncoderError> {
    let mut total = 0.0;
    for ex in data {
        let s = score(&ex.input)?;
        total += log_sum_exp(&s) - s[ex.label];
    }
    Ok(total / data.len().max(1) as f64)
}

/// Objective and its gradient, keyed by feature column. Only columns that
/// are stored in `params` or touched by `data` appear.
pub fn classifier_loss_and_gradient(
    params: &EncoderParams,
    data: &[LabeledInput],
    l2: f64,
) -> Result<(f64, BTreeMap<u32, Vec<f64>>), EncoderError> {
    let loss = classifier_objective(params, data, l2)?;
    let mut grad: BTreeMap<u32, Vec<f64>> = data_gradient(|x| params.emission_scores(x), params.n_labels(), data)?
        .into_iter()
        .collect();
    for (f, col) in params.columns() {
        let g = grad.entry(f).or_insert_with(|| vec![0.0; col.len()]);
        g.iter_mut().zip(col).for_each(|(g, w)| *g += l2 * w);
    }
    Ok((loss, grad))
}

/// Gradient of the mean cross-entropy only.
fn data_gradient(
    score: impl Fn(&LineInput) -> Result<Vec<f64>, EncoderError>,
    n_labels: usize,
    batch: &[LabeledInput],
) -> Result<HashMap<u32, Vec<f64>>, EncoderError> {
    let mut grad: HashMap<u32, Vec<f64>> = HashMap::new();
    let inv_n = 1.0 / batch.len().max(1) as f64;
    for ex in batch {
        let mut residual = softmax(&score(&ex.input)?);
        residual[ex.label] -= 1.0;
        ex.input.for_each_nonzero(|f, v| {
            let g = grad.entry(f).or_insert_with(|| vec![0.0; n_labels]);
            g.iter_mut().zip(&residual).for_each(|(g, r)| *g += r * v * inv_n);
        });
    }
    Ok(grad)
}

/// Mini-batch gradient descent from all-zero weights. Deterministic for a
/// given seed: batches are drawn from a ChaCha8 shuffle per epoch.
pub fn train_line_classifier(
    data: &[LabeledInput],
    label_set: &LabelSet,
    kind: EncoderKind,
    dim: usize,
    config: &ClassifierConfig,
) -> Result<TrainedClassifier, EncoderError> {
    if data.is_empty() {
        return Err(EncoderError::EmptyTrainingSet);
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || config.l2 < 0.0 {
        return Err(EncoderError::InvalidConfig(format!("{config:?}")));
    }
    if let Some(bad) = data.iter().find(|ex| ex.label >= label_set.len()) {
        return Err(EncoderError::UnknownLabel(format!("label index {}", bad.label)));
    }

    let n_labels = label_set.len();
    let mut weights = ScaledParams::new(EncoderParams::zeros(kind, n_labels, dim));
    let objective = |w: &ScaledParams| -> Result<f64, EncoderError> {
        Ok(mean_cross_entropy(|x| w.emission_scores(x), data)? + 0.5 * config.l2 * w.squared_norm())
    };

    let mut loss_trace = vec![objective(&weights)?];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledInput> = chunk.iter().map(|&i| data[i].clone()).collect();
            let grad = data_gradient(|x| weights.emission_scores(x), n_labels, &batch)?;
            weights.decay(1.0 - config.learning_rate * config.l2);
            // HashMap order is irrelevant: each column is updated independently
            for (f, g) in grad {
                let delta: Vec<f64> = g.iter().map(|g| -config.learning_rate * g).collect();
                weights.add_to_column(f, &delta);
            }
        }
        loss_trace.push(objective(&weights)?);
    }

    let params = weights.into_params();
    params.check_finite()?;
    Ok(TrainedClassifier { params, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::features::FeatureVector;

    fn fixture() -> (Vec<LabeledInput>, EncoderParams) {
        // 5 features, 3 labels
        let xs = [
            vec![(0, 1.0), (1, 0.5), (3, -1.0)],
            vec![(0, 1.0), (2, 2.0)],
            vec![(0, 1.0), (1, -0.3), (4, 1.2)],
            vec![(0, 1.0), (3, 0.7), (4, -0.4)],
        ];
        let labels = [0, 1, 2, 1];
        let data = xs
            .iter()
            .zip(labels)
            .map(|(x, y)| LabeledInput {
                input: LineInput::Sparse(FeatureVector::from_pairs(x.clone())),
                label: y,
            })
            .collect();
        let rows = vec![
            vec![0.1, -0.2, 0.3, 0.0, 0.5],
            vec![-0.4, 0.2, 0.1, 0.6, -0.1],
            vec![0.05, 0.0, -0.3, 0.2, 0.4],
        ];
        (data, EncoderParams::from_dense(EncoderKind::FeatureLinear, &rows).unwrap())
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (data, params) = fixture();
        let l2 = 0.3;
        let (_, grad) = classifier_loss_and_gradient(&params, &data, l2).unwrap();
        let eps = 1e-5;
        for f in 0..5u32 {
            for y in 0..3 {
                let mut plus = params.clone();
                plus.column_mut(f)[y] += eps;
                let mut minus = params.clone();
                minus.column_mut(f)[y] -= eps;
                let fd = (classifier_objective(&plus, &data, l2).unwrap()
                    - classifier_objective(&minus, &data, l2).unwrap())
                    / (2.0 * eps);
                let an = grad.get(&f).map_or(0.0, |c| c[y]);
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4, "f={f} y={y} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn zero_epochs_returns_zeros() {
        let (data, _) = fixture();
        let set = LabelSet::parse("t", "<none>\na\nb").unwrap();
        let cfg = ClassifierConfig {
            epochs: 0,
            ..Default::default()
        };
        let trained = train_line_classifier(&data, &set, EncoderKind::FeatureLinear, 5, &cfg).unwrap();
        assert!(trained.params.is_zero());
        assert_eq!(trained.loss_trace.len(), 1);
        assert!((trained.loss_trace[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_an_error() {
        let set = LabelSet::parse("t", "<none>").unwrap();
        assert!(matches!(
            train_line_classifier(&[], &set, EncoderKind::FeatureLinear, 5, &ClassifierConfig::default()),
            Err(EncoderError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn scaled_updates_equal_plain_gradient_steps() {
        // one full batch step from zero equals W = -lr * grad
        let (data, _) = fixture();
        let set = LabelSet::parse("t", "<none>\na\nb").unwrap();
        let cfg = ClassifierConfig {
            epochs: 1,
            batch_size: 100,
            learning_rate: 0.5,
            l2: 0.1,
            seed: 1,
        };
        let trained = train_line_classifier(&data, &set, EncoderKind::FeatureLinear, 5, &cfg).unwrap();
        let zero = EncoderParams::zeros(EncoderKind::FeatureLinear, 3, 5);
        let (_, grad) = classifier_loss_and_gradient(&zero, &data, cfg.l2).unwrap();
        for (f, g) in grad {
            for y in 0..3 {
                assert!((trained.params.weight(y, f) + 0.5 * g[y]).abs() < 1e-12);
            }
        }
    }
}
