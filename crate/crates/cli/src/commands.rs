use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use sectionseg::corpus::{
    consolidate_labels, corpus_stats, filter_notes_by_length, read_labeled_notes, read_notes, read_span_notes,
    split_note_level, write_labeled_notes, LabelSet, LabeledNote, LinePair, Note,
};
use sectionseg::crf::{predict_inputs, train_crf, train_crf_on_instances, CrfInstance, CrfModel};
use sectionseg::encoders::{
    classify_line, extract_features, featurize_pairs, remote_embed, train_line_classifier, EncoderKind,
    EncoderParams, FeatureConfig, LabeledInput, LineInput,
};
use sectionseg::evaluation::{
    categorize_errors, confidence_interval, evaluate_dataset, per_note_scores, render_hallucination_table,
    render_metrics_table, wilcoxon_signed_rank, ConfidenceInterval, ErrorBreakdown, EvalError, MetricsReport,
    NoteScore, StatTestResult,
};
use sectionseg::hallucination::{
    apply_corrections, detect_hallucinations, CorrectionCache, CorrectionSummary, HallucinationReport,
};
use sectionseg::jsonl;
use sectionseg::llm::{segment_with_llm, ChatClient, Family, HttpChatClient};
use sectionseg::model_file::{Engine, ModelFile};
use sectionseg::synthetic::clinical_span_corpus;
use serde::{Deserialize, Serialize};

use crate::config::{CorrectionMode, EncoderChoice, EngineName, LlmSection, RunConfig};
use crate::error::CliError;
use crate::{CompareArgs, CorrectArgs, EvaluateArgs, IngestArgs, PredictArgs, ReportArgs, ScoreMetric, SynthArgs, TrainArgs};

/// One line of a prediction file. `predictions` is null for a note the
/// engine failed on, with the reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub note_id: String,
    pub engine: String,
    pub predictions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub label_set: String,
    pub config_fingerprint: String,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucination: Option<HallucinationReport>,
    /// Notes the engine produced no labels for.
    #[serde(default)]
    pub skipped_notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_breakdown: Option<ErrorBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub n_pairs: usize,
    /// Notes present in only one score file.
    pub unpaired: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Absent when every paired difference is zero.
    pub wilcoxon: Option<StatTestResult>,
    pub verdict: String,
    pub ci_a: Option<ConfidenceInterval>,
    pub ci_b: Option<ConfidenceInterval>,
    pub ci_difference: Option<ConfidenceInterval>,
    pub config_fingerprint: String,
}

const SIGNIFICANCE: f64 = 0.05;

fn required(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn check_labels(notes: &[LabeledNote], label_set: &LabelSet) -> Result<(), CliError> {
    for note in notes {
        note.check_labels(label_set)?;
    }
    Ok(())
}

pub fn ingest(cfg: RunConfig, args: IngestArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(map) = args.consolidation_map {
        cfg.consolidation_map = Some(map);
    }
    if let Some(f) = args.train_fraction {
        cfg.split.fraction = f;
    }
    cfg.validate()?;
    let input = required(args.input.or_else(|| cfg.data.spans.clone()), "--input (or data.spans)")?;
    let out = required(out, "--out")?;

    let spans = read_span_notes(&input)?;
    let base = cfg.base_label_set()?;
    let mapping = cfg.consolidation()?;
    let mut notes = Vec::with_capacity(spans.len());
    for span_note in &spans {
        let note = span_note.to_labeled(&base)?;
        notes.push(match &mapping {
            Some(m) => consolidate_labels(&note, m),
            None => note,
        });
    }
    write_labeled_notes(&out, &notes)?;

    if let (Some(train_out), Some(test_out)) = (args.train_out, args.test_out) {
        let (train, test) = if notes.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            split_note_level(&notes, cfg.split.fraction, cfg.seed)?
        };
        write_labeled_notes(&train_out, &train)?;
        write_labeled_notes(&test_out, &test)?;
        eprintln!("split: {} train notes, {} test notes", train.len(), test.len());
    }

    let stats = corpus_stats(&spans);
    print!("{}", stats.render());
    if let Some(path) = args.stats_out {
        write_json(&path, &stats)?;
    }
    Ok(())
}

fn line_pairs(notes: &[LabeledNote]) -> Vec<LinePair> {
    notes
        .iter()
        .flat_map(|note| {
            let n = note.lines.len();
            note.lines.iter().zip(&note.labels).enumerate().map(move |(i, (text, label))| LinePair {
                note_id: note.note_id.clone(),
                line_index: i,
                note_length: n,
                text: text.clone(),
                label: label.clone(),
            })
        })
        .collect()
}

fn embed(cfg: &RunConfig, lines: &[String]) -> Result<Vec<LineInput>, CliError> {
    let embedding = cfg
        .embedding
        .as_ref()
        .ok_or_else(|| CliError::Config("remote_embedding encoder requires an [embedding] section".into()))?;
    Ok(remote_embed(embedding, lines)?.into_iter().map(LineInput::Dense).collect())
}

fn embed_dim(cfg: &RunConfig) -> Result<usize, CliError> {
    cfg.embedding
        .as_ref()
        .map(|e| e.embed_dim)
        .ok_or_else(|| CliError::Config("remote_embedding encoder requires an [embedding] section".into()))
}

fn gold_indices(note: &LabeledNote, label_set: &LabelSet) -> Result<Vec<usize>, CliError> {
    note.labels
        .iter()
        .map(|l| {
            label_set
                .index_of(l)
                .ok_or_else(|| CliError::Data(format!("note {}: label {l} is not in the label set", note.note_id)))
        })
        .collect()
}

pub fn train(cfg: RunConfig, args: TrainArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(engine) = args.engine {
        cfg.engine = Some(engine);
    }
    if let Some(encoder) = args.encoder {
        cfg.encoder = encoder;
    }
    if let Some(epochs) = args.epochs {
        cfg.crf.epochs = epochs;
        cfg.classifier.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        cfg.crf.learning_rate = lr;
        cfg.classifier.learning_rate = lr;
    }
    if let Some(train) = args.train {
        cfg.data.train = Some(train);
    }
    cfg.validate()?;
    let engine = cfg.engine.ok_or_else(|| CliError::Usage("missing --engine".into()))?;
    let out = required(out.or_else(|| cfg.out_path(&format!("model-{}.json", engine.as_str()))), "--out")?;
    let train_path = required(cfg.data.train.clone(), "--train (or data.train)")?;

    let notes = read_labeled_notes(&train_path)?;
    let label_set = cfg.label_set()?;
    check_labels(&notes, &label_set)?;
    let fp = cfg.fingerprint();

    let model = match engine {
        EngineName::Llm => return Err(CliError::Usage("the llm engine is zero-shot and has nothing to train".into())),
        EngineName::Crf => {
            let trained = match cfg.encoder {
                EncoderChoice::FeatureLinear => train_crf(&notes, &label_set, &cfg.features, &cfg.crf)?,
                EncoderChoice::RemoteEmbedding => {
                    let mut instances = Vec::with_capacity(notes.len());
                    for note in &notes {
                        instances.push(CrfInstance {
                            inputs: embed(&cfg, &note.lines)?,
                            gold: gold_indices(note, &label_set)?,
                        });
                    }
                    let init =
                        CrfModel::zeros(label_set.clone(), EncoderKind::RemoteEmbedding, embed_dim(&cfg)?, cfg.features);
                    train_crf_on_instances(init, &instances, &cfg.crf)?
                }
            };
            ModelFile::crf(trained.model, trained.loss_trace, fp)
        }
        EngineName::Classifier => {
            let pairs = line_pairs(&notes);
            let (data, kind, dim) = match cfg.encoder {
                EncoderChoice::FeatureLinear => (
                    featurize_pairs(&pairs, &label_set, &cfg.features)?,
                    EncoderKind::FeatureLinear,
                    cfg.features.feature_space_size as usize,
                ),
                EncoderChoice::RemoteEmbedding => {
                    let texts: Vec<String> = pairs.iter().map(|p| p.text.clone()).collect();
                    let inputs = embed(&cfg, &texts)?;
                    let data = inputs
                        .into_iter()
                        .zip(&pairs)
                        .map(|(input, p)| {
                            let label = label_set.index_of(&p.label).expect("labels checked");
                            LabeledInput { input, label }
                        })
                        .collect();
                    (data, EncoderKind::RemoteEmbedding, embed_dim(&cfg)?)
                }
            };
            let trained = train_line_classifier(&data, &label_set, kind, dim, &cfg.classifier)?;
            ModelFile::classifier(label_set, trained.params, cfg.features, trained.loss_trace, fp)
        }
    };

    for (epoch, loss) in model.loss_trace.iter().enumerate() {
        println!("epoch {epoch:>3}  loss {loss:.6}");
    }
    model.save(&out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn feature_inputs(lines: &[String], features: &FeatureConfig) -> Vec<LineInput> {
    let n = lines.len();
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| LineInput::Sparse(extract_features(line, i, n, features)))
        .collect()
}

fn note_inputs(cfg: &RunConfig, model: &ModelFile, note: &Note) -> Result<Vec<LineInput>, CliError> {
    match model.encoder_kind {
        EncoderKind::FeatureLinear => Ok(feature_inputs(&note.lines, &model.feature_config)),
        EncoderKind::RemoteEmbedding => embed(cfg, &note.lines),
    }
}

fn classify_note(params: &EncoderParams, label_set: &LabelSet, inputs: &[LineInput]) -> Result<Vec<String>, CliError> {
    inputs
        .iter()
        .map(|input| Ok(label_set.label(classify_line(params, input)?.0).to_string()))
        .collect()
}

fn llm_section(cfg: &RunConfig, base_url: Option<String>, model_name: Option<String>) -> LlmSection {
    let mut section = cfg.llm_section();
    if base_url.is_some() {
        section.base_url = base_url;
    }
    if let Some(name) = model_name {
        section.model_name = name;
    }
    section
}

pub fn predict(cfg: RunConfig, args: PredictArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(engine) = args.engine {
        cfg.engine = Some(engine);
    }
    if let Some(n) = args.max_note_lines {
        cfg.max_note_lines = Some(n);
    }
    if let Some(input) = args.input {
        cfg.data.test = Some(input);
    }
    if let Some(family) = args.family {
        cfg.llm.get_or_insert_with(LlmSection::default).family = family.into();
    }
    cfg.validate()?;
    let engine = cfg.engine.ok_or_else(|| CliError::Usage("missing --engine".into()))?;
    let out = required(out.or_else(|| cfg.out_path(&format!("predictions-{}.jsonl", engine.as_str()))), "--out")?;
    let input = required(cfg.data.test.clone(), "--input (or data.test)")?;

    let mut notes = read_notes(&input)?;
    if let Some(max) = cfg.max_note_lines {
        let before = notes.len();
        notes = filter_notes_by_length(&notes, max);
        if notes.len() < before {
            eprintln!("skipped {} notes longer than {max} lines", before - notes.len());
        }
    }

    let records = match engine {
        EngineName::Crf | EngineName::Classifier => {
            let model_path = required(args.model, "--model")?;
            let model = ModelFile::load(&model_path)?;
            let expected = if engine == EngineName::Crf { Engine::Crf } else { Engine::Classifier };
            if model.engine != expected {
                return Err(CliError::Usage(format!(
                    "{} holds a {} model, not {}",
                    model_path.display(),
                    model.engine.as_str(),
                    engine.as_str()
                )));
            }
            let crf = if expected == Engine::Crf { Some(model.to_crf()?) } else { None };
            let mut records = Vec::with_capacity(notes.len());
            for note in &notes {
                let predictions = if note.lines.is_empty() {
                    Vec::new()
                } else {
                    let inputs = note_inputs(&cfg, &model, note)?;
                    match &crf {
                        Some(crf) => predict_inputs(crf, &inputs)?
                            .into_iter()
                            .map(|y| model.label_set.label(y).to_string())
                            .collect(),
                        None => classify_note(&model.weights, &model.label_set, &inputs)?,
                    }
                };
                records.push(PredictionRecord {
                    note_id: note.note_id.clone(),
                    engine: engine.as_str().to_string(),
                    predictions: Some(predictions),
                    family: None,
                    error: None,
                });
            }
            records
        }
        EngineName::Llm => {
            let section = llm_section(&cfg, args.base_url, args.model_name);
            let client = HttpChatClient::new(section.client_config()?)?;
            let label_set = cfg.label_set()?;
            let results = segment_with_llm(&client, &notes, &label_set, section.family);
            let log: Vec<_> = results.iter().map(|r| r.run_log_entry()).collect();
            let log_path = args.run_log.unwrap_or_else(|| out.with_extension("runlog.jsonl"));
            jsonl::write(&log_path, &log)?;

            let failed = results.iter().filter(|r| r.prediction.is_none()).count();
            let records: Vec<PredictionRecord> = results
                .into_iter()
                .map(|r| PredictionRecord {
                    note_id: r.note_id,
                    engine: engine.as_str().to_string(),
                    predictions: r.prediction.map(|p| p.labels),
                    family: Some(section.family),
                    error: r.error,
                })
                .collect();
            jsonl::write(&out, &records)?;
            if failed > 0 && failed == records.len() {
                return Err(CliError::Remote(format!("all {failed} notes failed; see {}", log_path.display())));
            }
            if failed > 0 {
                tracing::warn!("{failed} of {} notes failed; see {}", records.len(), log_path.display());
            }
            return Ok(());
        }
    };
    jsonl::write(&out, &records)?;
    Ok(())
}

pub fn correct(cfg: RunConfig, args: CorrectArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(mode) = args.mode {
        cfg.correction.mode = mode;
    }
    if let Some(cache) = args.cache {
        cfg.correction.cache = Some(cache);
    }
    cfg.validate()?;
    let out = required(out.or_else(|| cfg.out_path("predictions-corrected.jsonl")), "--out")?;
    let label_set = cfg.label_set()?;
    let mut records: Vec<PredictionRecord> = jsonl::read(&args.input)?;

    let raw: Vec<Vec<String>> = records.iter().filter_map(|r| r.predictions.clone()).collect();
    let before = detect_hallucinations(&raw, &label_set);

    let cache = match &cfg.correction.cache {
        Some(path) => CorrectionCache::load(path)?,
        None => CorrectionCache::new(),
    };
    let (corrected, summary) = match cfg.correction.mode {
        CorrectionMode::Off => (
            raw,
            CorrectionSummary {
                entries: Vec::new(),
                corrected_lines: 0,
                note: "correction disabled; predictions passed through".to_string(),
            },
        ),
        CorrectionMode::FallbackOnly => apply_corrections(&raw, &label_set, &cache, None),
        CorrectionMode::Llm => {
            let section = llm_section(&cfg, args.base_url, args.model_name);
            let client = HttpChatClient::new(section.client_config()?)?;
            apply_corrections(&raw, &label_set, &cache, Some(&client as &dyn ChatClient))
        }
    };
    if cfg.correction.mode != CorrectionMode::Off {
        if let Some(path) = &cfg.correction.cache {
            cache.save(path)?;
        }
    }
    let after = detect_hallucinations(&corrected, &label_set);

    let mut corrected = corrected.into_iter();
    for record in records.iter_mut().filter(|r| r.predictions.is_some()) {
        record.predictions = corrected.next();
    }
    jsonl::write(&out, &records)?;

    print!(
        "{}",
        render_hallucination_table(&[("raw".to_string(), &before), ("corrected".to_string(), &after)])
    );
    println!();
    print!("{}", summary.render_top(args.top));
    println!("{}", summary.note);
    if let Some(path) = args.summary_out.or_else(|| cfg.out_path("correction-summary.json")) {
        write_json(&path, &summary)?;
    }
    Ok(())
}

fn index_predictions(records: Vec<PredictionRecord>) -> Result<BTreeMap<String, PredictionRecord>, CliError> {
    let mut by_id = BTreeMap::new();
    for r in records {
        let id = r.note_id.clone();
        if by_id.insert(id.clone(), r).is_some() {
            return Err(CliError::Data(format!("note {id} appears twice in the predictions")));
        }
    }
    Ok(by_id)
}

pub fn evaluate(cfg: RunConfig, args: EvaluateArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = cfg;
    if args.exclude_outside {
        cfg.evaluation.exclude_outside = true;
    }
    if let Some(n) = args.max_note_lines {
        cfg.max_note_lines = Some(n);
    }
    if let Some(gold) = args.gold {
        cfg.data.test = Some(gold);
    }
    cfg.validate()?;
    let gold_path = required(cfg.data.test.clone(), "--gold (or data.test)")?;
    let label_set = cfg.label_set()?;
    let mut gold = read_labeled_notes(&gold_path)?;
    if let Some(max) = cfg.max_note_lines {
        gold = filter_notes_by_length(&gold, max);
    }
    let records: Vec<PredictionRecord> = jsonl::read(&args.pred)?;
    let name = args
        .name
        .or_else(|| records.first().map(|r| r.engine.clone()))
        .unwrap_or_else(|| "model".to_string());
    let mut by_id = index_predictions(records)?;

    let mut used_gold = Vec::with_capacity(gold.len());
    let mut predictions = Vec::with_capacity(gold.len());
    let mut skipped_notes = Vec::new();
    for note in gold {
        let record = by_id
            .remove(&note.note_id)
            .ok_or_else(|| CliError::Data(format!("no prediction for note {}", note.note_id)))?;
        match record.predictions {
            Some(p) => {
                used_gold.push(note);
                predictions.push(p);
            }
            None => skipped_notes.push(note.note_id),
        }
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(CliError::Data(format!("prediction for note {extra} has no gold note")));
    }
    if !skipped_notes.is_empty() {
        tracing::warn!("{} notes have no predictions and are not scored", skipped_notes.len());
    }

    let options = cfg.evaluation.metric_options();
    let metrics = evaluate_dataset(&used_gold, &predictions, &label_set, &options)?;
    let scores = per_note_scores(&used_gold, &predictions, &label_set, &options)?;
    let halluc = detect_hallucinations(&predictions, &label_set);
    let error_breakdown = if args.categorize_errors {
        let section = llm_section(&cfg, args.base_url, None);
        let client = match section.client_config() {
            Ok(c) => Some(HttpChatClient::new(c)?),
            Err(_) => None,
        };
        Some(categorize_errors(&used_gold, &predictions, client.as_ref().map(|c| c as &dyn ChatClient))?)
    } else {
        None
    };

    print!("{}", render_metrics_table(&[(name.clone(), &metrics)]));
    if halluc.hl > 0 {
        println!();
        print!("{}", render_hallucination_table(&[(name.clone(), &halluc)]));
    }
    if let Some(b) = &error_breakdown {
        println!();
        println!(
            "errors: omission {}  label_confusion {}  valid_local_interpretation {}  other {}{}",
            b.omission,
            b.label_confusion,
            b.valid_local_interpretation,
            b.other,
            if b.rule_only { "  (rule-only)" } else { "" }
        );
    }

    let report = EvaluationReport {
        name: name.clone(),
        label_set: label_set.name().to_string(),
        config_fingerprint: cfg.fingerprint(),
        metrics,
        hallucination: (halluc.hl > 0).then_some(halluc),
        skipped_notes,
        error_breakdown,
    };
    if let Some(path) = out.or_else(|| cfg.out_path(&format!("{name}.report.json"))) {
        write_json(&path, &report)?;
    }
    if let Some(path) = args.scores_out.or_else(|| cfg.out_path(&format!("{name}.scores.jsonl"))) {
        jsonl::write(&path, &scores)?;
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn optional_ci(values: &[f64], level: f64, seed: u64) -> Result<Option<ConfidenceInterval>, CliError> {
    match confidence_interval(values, level, seed) {
        Ok(ci) => Ok(Some(ci)),
        Err(EvalError::TooFewValues(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn render_ci(ci: &Option<ConfidenceInterval>) -> String {
    match ci {
        Some(ci) => format!("{:.4} [{:.4}, {:.4}]", ci.mean, ci.low, ci.high),
        None => "n/a".to_string(),
    }
}

pub fn compare(cfg: RunConfig, args: CompareArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    cfg.validate()?;
    let a: Vec<NoteScore> = jsonl::read(&args.a)?;
    let b: Vec<NoteScore> = jsonl::read(&args.b)?;
    let name_a = args.name_a.unwrap_or_else(|| stem(&args.a));
    let name_b = args.name_b.unwrap_or_else(|| stem(&args.b));
    let metric = |s: &NoteScore| match args.metric {
        ScoreMetric::MacroF1 => s.macro_f1,
        ScoreMetric::WeightedF1 => s.weighted_f1,
    };

    let b_by_id: BTreeMap<&str, &NoteScore> = b.iter().map(|s| (s.note_id.as_str(), s)).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut paired: HashSet<&str> = HashSet::new();
    for s in &a {
        if let Some(t) = b_by_id.get(s.note_id.as_str()) {
            if paired.insert(s.note_id.as_str()) {
                xs.push(metric(s));
                ys.push(metric(t));
            }
        }
    }
    if xs.is_empty() {
        return Err(CliError::Data(format!(
            "{} and {} share no notes",
            args.a.display(),
            args.b.display()
        )));
    }
    let unpaired = a.len() + b.len() - 2 * xs.len();

    let wilcoxon = match wilcoxon_signed_rank(&xs, &ys) {
        Ok(r) => Some(r),
        Err(EvalError::DegenerateSample) => None,
        Err(e) => return Err(e.into()),
    };
    let verdict = match &wilcoxon {
        None => "no difference".to_string(),
        Some(r) if r.p_value < SIGNIFICANCE => format!("significant at {SIGNIFICANCE}"),
        Some(_) => format!("not significant at {SIGNIFICANCE}"),
    };
    let level = cfg.evaluation.ci_level;
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = ComparisonReport {
        a: name_a,
        b: name_b,
        metric: match args.metric {
            ScoreMetric::MacroF1 => "macro_f1",
            ScoreMetric::WeightedF1 => "weighted_f1",
        }
        .to_string(),
        n_pairs: xs.len(),
        unpaired,
        mean_a: mean(&xs),
        mean_b: mean(&ys),
        ci_a: optional_ci(&xs, level, cfg.seed)?,
        ci_b: optional_ci(&ys, level, cfg.seed)?,
        ci_difference: optional_ci(&diffs, level, cfg.seed)?,
        wilcoxon,
        verdict,
        config_fingerprint: cfg.fingerprint(),
    };

    println!("{} vs {} on per-note {} ({} pairs)", report.a, report.b, report.metric, report.n_pairs);
    println!("  {:<12} {}", report.a, render_ci(&report.ci_a));
    println!("  {:<12} {}", report.b, render_ci(&report.ci_b));
    println!("  {:<12} {}", "difference", render_ci(&report.ci_difference));
    match &report.wilcoxon {
        Some(r) => println!(
            "  wilcoxon W = {} (n = {}, {:?}), p = {:.6}: {}",
            r.statistic, r.n_effective, r.method, r.p_value, report.verdict
        ),
        None => println!("  wilcoxon: all paired differences are zero: {}", report.verdict),
    }
    if let Some(path) = out.or_else(|| cfg.out_path("comparison.json")) {
        write_json(&path, &report)?;
    }
    Ok(())
}

pub fn report(cfg: RunConfig, args: ReportArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let reports: Vec<EvaluationReport> = args.reports.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let metric_rows: Vec<(String, &MetricsReport)> = reports.iter().map(|r| (r.name.clone(), &r.metrics)).collect();
    let mut text = render_metrics_table(&metric_rows);
    let halluc_rows: Vec<(String, &HallucinationReport)> = reports
        .iter()
        .filter_map(|r| r.hallucination.as_ref().map(|h| (r.name.clone(), h)))
        .collect();
    if !halluc_rows.is_empty() {
        text.push('\n');
        text.push_str(&render_hallucination_table(&halluc_rows));
    }
    print!("{text}");
    if let Some(path) = out.or_else(|| cfg.out_path("table.txt")) {
        write_text(&path, &text)?;
    }
    Ok(())
}

pub fn synth(cfg: RunConfig, args: SynthArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let out = required(out, "--out")?;
    let notes = clinical_span_corpus(args.notes, cfg.seed);
    jsonl::write(&out, &notes)?;
    eprintln!("wrote {} notes to {}", notes.len(), out.display());
    Ok(())
}
