use std::path::PathBuf;

use crate::schema::rule::RuleError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A remote (or mock) provider failed after all retry attempts.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("provider {provider} failed after {attempts} attempt(s): {message}")]
pub struct ProviderError {
    pub provider: String,
    pub message: String,
    pub attempts: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("reference is empty")]
    EmptyReference,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("payload of {size} chars exceeds the context budget of {budget}")]
    ContextOverflow { size: usize, budget: usize },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("unparsable provider output: {0}")]
    Format(String),
    #[error("section {0} was not matched in the transcript")]
    SectionAbsent(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// True for failures that originate at an embedding or LLM provider.
    pub fn is_provider(&self) -> bool {
        matches!(self, Error::Provider(_) | Error::ContextOverflow { .. })
    }
}
