use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading inputs and configuring runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed problem descriptor: {message}")]
    MalformedDescriptor { path: PathBuf, message: String },
    #[error("{path}: duplicate problem id `{id}` (first seen in {first})")]
    DuplicateProblem {
        id: String,
        path: PathBuf,
        first: PathBuf,
    },
    #[error("unknown programming language `{0}`")]
    UnknownLanguage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
    #[error(transparent)]
    Plan(#[from] crate::strategy::PlanError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Gateway(#[from] crate::llm::GatewayError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
