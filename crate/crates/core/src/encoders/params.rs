use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::EncoderError;
use crate::math::{argmax, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    FeatureLinear,
    RemoteEmbedding,
}

/// Encoder output for one line: hashed sparse features or a dense embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LineInput {
    Sparse(FeatureVector),
    Dense(Vec<f64>),
}

impl LineInput {
    /// Non-zero `(column, value)` pairs.
    pub fn for_each_nonzero(&self, mut f: impl FnMut(u32, f64)) {
        match self {
            LineInput::Sparse(fv) => fv.entries().iter().for_each(|&(i, v)| f(i, v)),
            LineInput::Dense(xs) => xs
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .for_each(|(i, &v)| f(i as u32, v)),
        }
    }
}

/// Label-by-feature projection matrix. Stored column-wise and sparsely: a
/// missing column is all zeros, which keeps a 2^20-wide hashed feature space
/// affordable.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    kind: EncoderKind,
    n_labels: usize,
    dim: usize,
    columns: BTreeMap<u32, Vec<f64>>,
}

impl EncoderParams {
    pub fn zeros(kind: EncoderKind, n_labels: usize, dim: usize) -> Self {
        Self {
            kind,
            n_labels,
            dim,
            columns: BTreeMap::new(),
        }
    }

    /// Builds params from a dense row-major `n_labels x dim` matrix.
    pub fn from_dense(kind: EncoderKind, rows: &[Vec<f64>]) -> Result<Self, EncoderError> {
        let n_labels = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut params = Self::zeros(kind, n_labels, dim);
        for (y, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(EncoderError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for (f, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    params.column_mut(f as u32)[y] = w;
                }
            }
        }
        params.check_finite()?;
        Ok(params)
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self, label: usize, feature: u32) -> f64 {
        self.columns.get(&feature).map_or(0.0, |c| c[label])
    }

    pub fn column(&self, feature: u32) -> Option<&[f64]> {
        self.columns.get(&feature).map(Vec::as_slice)
    }

    pub fn column_mut(&mut self, feature: u32) -> &mut Vec<f64> {
        let n = self.n_labels;
        self.columns.entry(feature).or_insert_with(|| vec![0.0; n])
    }

    pub fn columns(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.columns.iter().map(|(&f, c)| (f, c.as_slice()))
    }

    pub(crate) fn columns_mut(&mut self) -> impl Iterator<Item = (&u32, &mut Vec<f64>)> {
        self.columns.iter_mut()
    }

    pub fn is_zero(&self) -> bool {
        self.columns.values().all(|c| c.iter().all(|&w| w == 0.0))
    }

    pub fn check_finite(&self) -> Result<(), EncoderError> {
        if self.columns.values().flatten().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(EncoderError::NonFinite)
        }
    }

    /// `score[y] = <W[y], x>`.
    pub fn emission_scores(&self, input: &LineInput) -> Result<Vec<f64>, EncoderError> {
        let mut scores = vec![0.0; self.n_labels];
        match input {
            LineInput::Sparse(fv) => {
                for &(f, v) in fv.entries() {
                    if f as usize >= self.dim {
                        return Err(EncoderError::DimensionMismatch {
                            expected: self.dim,
                            found: f as usize + 1,
                        });
                    }
                    if let Some(col) = self.columns.get(&f) {
                        scores.iter_mut().zip(col).for_each(|(s, w)| *s += w * v);
                    }
                }
            }
            LineInput::Dense(xs) => {
                if xs.len() != self.dim {
                    return Err(EncoderError::DimensionMismatch {
                        expected: self.dim,
                        found: xs.len(),
                    });
                }
                for (&f, col) in &self.columns {
                    let v = xs[f as usize];
                    scores.iter_mut().zip(col).for_each(|(s, w)| *s += w * v);
                }
            }
        }
        Ok(scores)
    }
}

pub fn emission_scores(params: &EncoderParams, input: &LineInput) -> Result<Vec<f64>, EncoderError> {
    params.emission_scores(input)
}

/// Softmax over emission scores; the label is the argmax, lowest index on ties.
pub fn classify_line(
    params: &EncoderParams,
    input: &LineInput,
) -> Result<(usize, Vec<f64>), EncoderError> {
    let scores = params.emission_scores(input)?;
    let probs = softmax(&scores);
    Ok((argmax(&scores), probs))
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    encoder_kind: EncoderKind,
    n_labels: usize,
    dim: usize,
    /// Columns that hold at least one non-zero weight, ascending.
    nonzero_columns: Vec<u32>,
    /// Row-major weights restricted to `nonzero_columns`.
    rows: Vec<Vec<f64>>,
}

impl Serialize for EncoderParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let nonzero: Vec<u32> = self
            .columns
            .iter()
            .filter(|(_, c)| c.iter().any(|&w| w != 0.0))
            .map(|(&f, _)| f)
            .collect();
        let rows = (0..self.n_labels)
            .map(|y| nonzero.iter().map(|f| self.columns[f][y]).collect())
            .collect();
        ParamsRepr {
            encoder_kind: self.kind,
            n_labels: self.n_labels,
            dim: self.dim,
            nonzero_columns: nonzero,
            rows,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EncoderParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ParamsRepr::deserialize(deserializer)?;
        if repr.rows.len() != repr.n_labels {
            return Err(D::Error::custom("row count does not match n_labels"));
        }
        let mut params = EncoderParams::zeros(repr.encoder_kind, repr.n_labels, repr.dim);
        for (k, &f) in repr.nonzero_columns.iter().enumerate() {
            if f as usize >= repr.dim {
                return Err(D::Error::custom(format!("column {f} outside dim {}", repr.dim)));
            }
            let col = params.column_mut(f);
            for (y, row) in repr.rows.iter().enumerate() {
                col[y] = *row
                    .get(k)
                    .ok_or_else(|| D::Error::custom("ragged weight rows"))?;
            }
        }
        params.check_finite().map_err(D::Error::custom)?;
        Ok(params)
    }
}
