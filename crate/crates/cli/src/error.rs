use sectionseg::corpus::CorpusError;
use sectionseg::crf::CrfError;
use sectionseg::encoders::EncoderError;
use sectionseg::evaluation::EvalError;
use sectionseg::jsonl::JsonlError;
use sectionseg::llm::LlmError;
use sectionseg::model_file::ModelFileError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("remote service: {0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Remote(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Http(_) => CliError::Remote(e.to_string()),
            EncoderError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CrfError> for CliError {
    fn from(e: CrfError) -> Self {
        match e {
            CrfError::Encoder(inner) => inner.into(),
            CrfError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidConfig(_) => CliError::Config(e.to_string()),
            LlmError::EmptyNote(_) | LlmError::NoParsableLines(_) => CliError::Data(e.to_string()),
            _ => CliError::Remote(e.to_string()),
        }
    }
}
