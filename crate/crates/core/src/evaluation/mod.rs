//! Line-level scoring, per-note comparison and error analysis.

mod errors;
mod metrics;
mod report;
mod stats;

use thiserror::Error;

pub use errors::{categorize_errors, error_prompt, ErrorBreakdown, ErrorCategory, ErrorRecord, ERROR_PROMPT_VERSION};
pub use metrics::{
    confusion_counts, evaluate_dataset, per_note_scores, prf_metrics, Averages, ConfusionCounts, LabelMetrics,
    MacroLabels, MetricOptions, MetricsReport, NoteScore,
};
pub use report::{render_hallucination_table, render_metrics_table};
pub use stats::{
    bootstrap_ci, confidence_interval, wilcoxon_signed_rank, ConfidenceInterval, StatTestResult, TestMethod,
    BOOTSTRAP_RESAMPLES, EXACT_MAX_N,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("note {note_id}: {gold} gold labels but {predicted} predictions")]
    LengthMismatch {
        note_id: String,
        gold: usize,
        predicted: usize,
    },
    #[error("{gold} gold notes but {predicted} predicted notes")]
    NoteCountMismatch { gold: usize, predicted: usize },
    #[error("note {note_id}: gold label {label} is not in the label set")]
    UnknownGoldLabel { note_id: String, label: String },
    #[error("paired samples differ in length ({a} vs {b})")]
    PairCountMismatch { a: usize, b: usize },
    #[error("every paired difference is zero")]
    DegenerateSample,
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("confidence level {0} must lie in (0, 1)")]
    InvalidLevel(f64),
}
