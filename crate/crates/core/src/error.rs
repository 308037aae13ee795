use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] ltssl_autodiff::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("architecture mismatch at `{param}`: {detail}")]
    ArchitectureMismatch { param: String, detail: String },

    #[error("batch norm `{0}` has no running statistics; run a train-mode pass first")]
    NoRunningStats(String),

    #[error("non-finite loss at step {step} ({phase})")]
    NonFiniteLoss { step: usize, phase: &'static str },

    #[error("validation set for {context} contains a single class; AUC is undefined, choose another fold assignment or seed")]
    SingleClassValidation { context: String },

    #[error("patient leakage: {0}")]
    Leakage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: &std::path::Path, detail: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.display().to_string(),
            detail: detail.to_string(),
        }
    }
}
