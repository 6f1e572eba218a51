use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{LabelSet, LabeledNote, OUTSIDE};

/// Per-label tallies in label-set order. Predictions outside the label set
/// are counted in `invalid` and never as false positives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<String>,
    pub true_positive: Vec<usize>,
    pub false_positive: Vec<usize>,
    pub false_negative: Vec<usize>,
    pub support: Vec<usize>,
    pub invalid: usize,
}

impl ConfusionCounts {
    pub fn empty(label_set: &LabelSet) -> Self {
        let n = label_set.len();
        Self {
            labels: label_set.labels().to_vec(),
            true_positive: vec![0; n],
            false_positive: vec![0; n],
            false_negative: vec![0; n],
            support: vec![0; n],
            invalid: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.support.iter().sum()
    }

    /// Tallies one note into `self`.
    pub fn add(
        &mut self,
        note_id: &str,
        gold: &[String],
        predicted: &[String],
        label_set: &LabelSet,
    ) -> Result<(), EvalError> {
        if gold.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                note_id: note_id.to_string(),
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        for (g, p) in gold.iter().zip(predicted) {
            let gi = label_set.index_of(g).ok_or_else(|| EvalError::UnknownGoldLabel {
                note_id: note_id.to_string(),
                label: g.clone(),
            })?;
            self.support[gi] += 1;
            match label_set.index_of(p) {
                Some(pi) if pi == gi => self.true_positive[gi] += 1,
                Some(pi) => {
                    self.false_negative[gi] += 1;
                    self.false_positive[pi] += 1;
                }
                None => {
                    self.false_negative[gi] += 1;
                    self.invalid += 1;
                }
            }
        }
        Ok(())
    }
}

pub fn confusion_counts(gold: &[String], predicted: &[String], label_set: &LabelSet) -> Result<ConfusionCounts, EvalError> {
    let mut counts = ConfusionCounts::empty(label_set);
    counts.add("", gold, predicted, label_set)?;
    Ok(counts)
}

/// Which labels enter the macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroLabels {
    /// Labels with gold support in the evaluated unit.
    #[default]
    GoldSupport,
    AllLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    pub macro_labels: MacroLabels,
    /// Drops `<none>` from both averages.
    pub exclude_outside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "MP")]
    pub mp: f64,
    #[serde(rename = "MR")]
    pub mr: f64,
    #[serde(rename = "MF1")]
    pub mf1: f64,
    #[serde(rename = "wP")]
    pub wp: f64,
    #[serde(rename = "wR")]
    pub wr: f64,
    #[serde(rename = "wF1")]
    pub wf1: f64,
    /// Macro average over every label considered, supported or not.
    pub full_set_macro: Averages,
    pub per_label: Vec<LabelMetrics>,
    pub total_lines: usize,
    pub invalid_predictions: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-label P/R/F1 (0/0 counts as 0), macro and support-weighted averages.
pub fn prf_metrics(counts: &ConfusionCounts, options: &MetricOptions) -> MetricsReport {
    let per_label: Vec<LabelMetrics> = (0..counts.labels.len())
        .map(|i| {
            let tp = counts.true_positive[i];
            let precision = ratio(tp, tp + counts.false_positive[i]);
            let recall = ratio(tp, tp + counts.false_negative[i]);
            LabelMetrics {
                label: counts.labels[i].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: counts.support[i],
            }
        })
        .collect();

    let considered: Vec<&LabelMetrics> = per_label
        .iter()
        .filter(|m| !(options.exclude_outside && m.label == OUTSIDE))
        .collect();
    let in_macro: Vec<&&LabelMetrics> = considered
        .iter()
        .filter(|m| options.macro_labels == MacroLabels::AllLabels || m.support > 0)
        .collect();
    let total: usize = considered.iter().map(|m| m.support).sum();
    let weighted = |f: fn(&LabelMetrics) -> f64| -> f64 {
        if total == 0 {
            return 0.0;
        }
        considered.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64
    };

    MetricsReport {
        mp: mean(in_macro.iter().map(|m| m.precision)),
        mr: mean(in_macro.iter().map(|m| m.recall)),
        mf1: mean(in_macro.iter().map(|m| m.f1)),
        wp: weighted(|m| m.precision),
        wr: weighted(|m| m.recall),
        wf1: weighted(|m| m.f1),
        full_set_macro: Averages {
            precision: mean(considered.iter().map(|m| m.precision)),
            recall: mean(considered.iter().map(|m| m.recall)),
            f1: mean(considered.iter().map(|m| m.f1)),
        },
        total_lines: counts.total(),
        invalid_predictions: counts.invalid,
        per_label,
    }
}

fn check_alignment(dataset: &[LabeledNote], predictions: &[Vec<String>]) -> Result<(), EvalError> {
    if dataset.len() != predictions.len() {
        return Err(EvalError::NoteCountMismatch {
            gold: dataset.len(),
            predicted: predictions.len(),
        });
    }
    Ok(())
}

/// Corpus-level metrics over all lines of all notes.
pub fn evaluate_dataset(
    dataset: &[LabeledNote],
    predictions: &[Vec<String>],
    label_set: &LabelSet,
    options: &MetricOptions,
) -> Result<MetricsReport, EvalError> {
    check_alignment(dataset, predictions)?;
    let mut counts = ConfusionCounts::empty(label_set);
    for (note, pred) in dataset.iter().zip(predictions) {
        counts.add(&note.note_id, &note.labels, pred, label_set)?;
    }
    Ok(prf_metrics(&counts, options))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteScore {
    pub note_id: String,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Metrics computed within each note on its own.
pub fn per_note_scores(
    dataset: &[LabeledNote],
    predictions: &[Vec<String>],
    label_set: &LabelSet,
    options: &MetricOptions,
) -> Result<Vec<NoteScore>, EvalError> {
    check_alignment(dataset, predictions)?;
    dataset
        .iter()
        .zip(predictions)
        .map(|(note, pred)| {
            let mut counts = ConfusionCounts::empty(label_set);
            counts.add(&note.note_id, &note.labels, pred, label_set)?;
            let m = prf_metrics(&counts, options);
            Ok(NoteScore {
                note_id: note.note_id.clone(),
                macro_f1: m.mf1,
                weighted_f1: m.wf1,
            })
        })
        .collect()
}
