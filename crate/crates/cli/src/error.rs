use kgqa_core::dataset::DatasetError;
use kgqa_core::kg::LoadError;
use kgqa_core::matcher::{EmbedError, IndexError};
use kgqa_core::pipeline::{CompletionError, PipelineError};
use kgqa_core::sparql::SparqlError;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CompletionError> for CliError {
    fn from(e: CompletionError) -> Self {
        let msg = e.to_string();
        match e {
            CompletionError::Transport(_) | CompletionError::Timeout | CompletionError::HttpStatus { .. } => CliError::Transport(msg),
            CompletionError::MissingApiKey(_) | CompletionError::ReplayFile { .. } => CliError::Config(msg),
            CompletionError::ReplayMiss { .. } | CompletionError::ReplayShort { .. } | CompletionError::Malformed(_) => CliError::Data(msg),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        let msg = e.to_string();
        match e {
            EmbedError::Transport(_) | EmbedError::HttpStatus(_) => CliError::Transport(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<SparqlError> for CliError {
    fn from(e: SparqlError) -> Self {
        let msg = e.to_string();
        match e {
            SparqlError::Transport { .. } | SparqlError::Timeout { .. } | SparqlError::HttpStatus { .. } => CliError::Transport(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Completion(e) => e.into(),
            PipelineError::Embed(e) => e.into(),
            PipelineError::Sparql(e) => e.into(),
            PipelineError::Config(m) => CliError::Config(m),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Embed(e) => e.into(),
            IndexError::Fingerprint { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}
