use thiserror::Error;

/// Error type shared across the engine.
///
/// Every variant maps to a stable machine-parseable class string used by the
/// CLI when reporting failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("usage: {0}")]
    Usage(String),

    /// Bad or missing input data (manifests, images, flow files).
    #[error("ingestion: {0}")]
    Ingestion(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Training diverged or produced non-finite values.
    #[error("numeric: {0}")]
    Numeric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Usage(_) => "usage",
            Error::Ingestion(_) => "ingestion",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
