//! `sectionseg`: ingest, train, predict, correct, evaluate, compare, report.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sectionseg::llm::Family;
use tracing_subscriber::EnvFilter;

use crate::config::{CorrectionMode, EncoderChoice, EngineName, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sectionseg", version, about = "Clinical note section segmentation pipeline")]
struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Label file (one slug per line).
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output file of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project span-annotated notes onto lines and print label frequencies.
    Ingest(IngestArgs),
    /// Train a line classifier or CRF and write a model file.
    Train(TrainArgs),
    /// Label every line of every note with one engine.
    Predict(PredictArgs),
    /// Map hallucinated headers back into the label set.
    Correct(CorrectArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Paired Wilcoxon test and bootstrap intervals over per-note scores.
    Compare(CompareArgs),
    /// Render evaluation reports as one table.
    Report(ReportArgs),
    /// Write a seeded synthetic span-annotated corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Span-annotated JSONL.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also write a note-level train split here.
    #[arg(long, requires = "test_out")]
    pub train_out: Option<PathBuf>,
    #[arg(long, requires = "train_out")]
    pub test_out: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Frequency report as JSON.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[arg(long)]
    pub consolidation_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub engine: Option<EngineName>,
    /// Line-level JSONL with gold labels.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderChoice>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_enum)]
    pub engine: Option<EngineName>,
    /// Line-level JSONL; gold labels, if present, are ignored.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Model file for `crf` and `classifier`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model_name: Option<String>,
    /// Skip notes with more lines than this.
    #[arg(long)]
    pub max_note_lines: Option<usize>,
    /// Raw completions and diagnostics; defaults next to `--out`.
    #[arg(long)]
    pub run_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Prediction JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<CorrectionMode>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model_name: Option<String>,
    /// Entries shown in the printed summary.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Line-level JSONL with gold labels.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Prediction JSONL.
    #[arg(long)]
    pub pred: PathBuf,
    /// Row name in tables; defaults to the engine of the predictions.
    #[arg(long)]
    pub name: Option<String>,
    /// Per-note scores JSONL, the input of `compare`.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
    #[arg(long)]
    pub exclude_outside: bool,
    #[arg(long)]
    pub max_note_lines: Option<usize>,
    /// Break errors into categories (LLM-assisted when an endpoint is set).
    #[arg(long)]
    pub categorize_errors: bool,
    #[arg(long)]
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreMetric {
    MacroF1,
    WeightedF1,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Per-note scores of the first engine.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub name_a: Option<String>,
    #[arg(long)]
    pub name_b: Option<String>,
    #[arg(long, value_enum, default_value = "macro-f1")]
    pub metric: ScoreMetric,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON files, one table row each.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub notes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Llama,
    Mistral,
    Qwen,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Llama => Family::Llama,
            FamilyArg::Mistral => Family::Mistral,
            FamilyArg::Qwen => Family::Qwen,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(labels) = cli.labels {
        cfg.labels = Some(labels);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.propagate_seed();
    let out = cli.out;
    match cli.command {
        Command::Ingest(args) => commands::ingest(cfg, args, out),
        Command::Train(args) => commands::train(cfg, args, out),
        Command::Predict(args) => commands::predict(cfg, args, out),
        Command::Correct(args) => commands::correct(cfg, args, out),
        Command::Evaluate(args) => commands::evaluate(cfg, args, out),
        Command::Compare(args) => commands::compare(cfg, args, out),
        Command::Report(args) => commands::report(cfg, args, out),
        Command::Synth(args) => commands::synth(cfg, args, out),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
