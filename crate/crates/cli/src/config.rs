//! Run configuration: one TOML file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use sectionseg::corpus::{ConsolidationMap, LabelSet};
use sectionseg::crf::CrfConfig;
use sectionseg::encoders::{ClassifierConfig, EmbeddingProviderConfig, FeatureConfig};
use sectionseg::evaluation::{MacroLabels, MetricOptions};
use sectionseg::llm::{CompletionClientConfig, Family};
use sectionseg::model_file::fingerprint;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    Crf,
    Classifier,
    Llm,
}

impl EngineName {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineName::Crf => "crf",
            EngineName::Classifier => "classifier",
            EngineName::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EncoderChoice {
    #[default]
    FeatureLinear,
    RemoteEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    Off,
    #[default]
    FallbackOnly,
    Llm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub spans: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fraction: 0.8 }
    }
}

/// Chat endpoint settings; `base_url` may also come from `SECTIONSEG_API_BASE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub base_url: Option<String>,
    pub model_name: String,
    pub family: Family,
    pub temperature: f64,
    pub max_output_tokens: Option<usize>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        let c = CompletionClientConfig::new("", "default");
        Self {
            base_url: None,
            model_name: c.model_name,
            family: Family::Llama,
            temperature: c.temperature,
            max_output_tokens: c.max_output_tokens,
            timeout_ms: c.timeout_ms,
            max_retries: c.max_retries,
            max_in_flight: c.max_in_flight,
            backoff_ms: c.backoff_ms,
        }
    }
}

impl LlmSection {
    pub fn client_config(&self) -> Result<CompletionClientConfig, CliError> {
        let base_url = sectionseg::http::resolve_base_url(self.base_url.as_deref()).ok_or_else(|| {
            CliError::Config(format!(
                "no chat endpoint: set llm.base_url, --base-url or {}",
                sectionseg::http::API_BASE_ENV
            ))
        })?;
        let config = CompletionClientConfig {
            base_url,
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            max_in_flight: self.max_in_flight,
            backoff_ms: self.backoff_ms,
            api_key: None,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSection {
    pub mode: CorrectionMode,
    /// JSONL mapping cache, read before and written after correction.
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub exclude_outside: bool,
    pub macro_labels: MacroLabels,
    pub ci_level: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            exclude_outside: false,
            macro_labels: MacroLabels::GoldSupport,
            ci_level: 0.95,
        }
    }
}

impl EvaluationSection {
    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            macro_labels: self.macro_labels,
            exclude_outside: self.exclude_outside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    /// Label file; the bundled ONC set when absent.
    pub labels: Option<PathBuf>,
    /// Two-column TSV folding labels of `labels` into coarser ones.
    pub consolidation_map: Option<PathBuf>,
    /// Drives every random stream: split, training order, bootstrap.
    pub seed: u64,
    pub max_note_lines: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub engine: Option<EngineName>,
    pub encoder: EncoderChoice,
    pub split: SplitConfig,
    pub features: FeatureConfig,
    pub classifier: ClassifierConfig,
    pub crf: CrfConfig,
    pub llm: Option<LlmSection>,
    pub embedding: Option<EmbeddingProviderConfig>,
    pub correction: CorrectionSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            labels: None,
            consolidation_map: None,
            seed: 42,
            max_note_lines: None,
            out_dir: None,
            engine: None,
            encoder: EncoderChoice::FeatureLinear,
            split: SplitConfig::default(),
            features: FeatureConfig::default(),
            classifier: ClassifierConfig::default(),
            crf: CrfConfig::default(),
            llm: None,
            embedding: None,
            correction: CorrectionSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into every seeded component.
    pub fn propagate_seed(&mut self) {
        self.classifier.seed = self.seed;
        self.crf.seed = self.seed;
    }

    /// Checks referenced files and engine-specific settings.
    pub fn validate(&self) -> Result<(), CliError> {
        for path in [&self.labels, &self.consolidation_map].into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::Config(format!("{} does not exist", path.display())));
            }
        }
        if !(self.split.fraction > 0.0 && self.split.fraction <= 1.0) {
            return Err(CliError::Config(format!("split.fraction {} is outside (0, 1]", self.split.fraction)));
        }
        if self.features.feature_space_size < 2 {
            return Err(CliError::Config("features.feature_space_size must be >= 2".into()));
        }
        if !(self.evaluation.ci_level > 0.0 && self.evaluation.ci_level < 1.0) {
            return Err(CliError::Config(format!("evaluation.ci_level {} is outside (0, 1)", self.evaluation.ci_level)));
        }
        if self.engine == Some(EngineName::Llm) && self.encoder == EncoderChoice::RemoteEmbedding {
            return Err(CliError::Config("encoder = remote_embedding applies to crf and classifier only".into()));
        }
        if self.encoder == EncoderChoice::RemoteEmbedding {
            let embedding = self.embedding.as_ref().ok_or_else(|| {
                CliError::Config("encoder = remote_embedding requires an [embedding] section".into())
            })?;
            embedding.validate()?;
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    /// The label set predictions and gold labels live in: the configured
    /// file (or bundled ONC), consolidated when a map is set.
    pub fn label_set(&self) -> Result<LabelSet, CliError> {
        let base = self.base_label_set()?;
        match self.consolidation()? {
            Some(map) => {
                let name = format!("{}-consolidated", base.name());
                Ok(map.consolidate_label_set(&base, name))
            }
            None => Ok(base),
        }
    }

    /// The label set raw span annotations are checked against.
    pub fn base_label_set(&self) -> Result<LabelSet, CliError> {
        match &self.labels {
            Some(path) => LabelSet::from_file(path).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(LabelSet::onc()),
        }
    }

    pub fn consolidation(&self) -> Result<Option<ConsolidationMap>, CliError> {
        self.consolidation_map
            .as_ref()
            .map(|p| ConsolidationMap::from_file(p).map_err(|e| CliError::Config(e.to_string())))
            .transpose()
    }

    pub fn llm_section(&self) -> LlmSection {
        self.llm.clone().unwrap_or_default()
    }

    /// `<out_dir>/<file>` when an output directory is configured.
    pub fn out_path(&self, file: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(file))
    }
}
