use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (bad index, bad shape).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite value produced while evaluating a network.
    #[error("numeric failure in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    /// Malformed or truncated binary file.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    /// Dataset was collected under a different environment configuration.
    #[error("fingerprint mismatch: dataset {found}, config {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("{stage} failed (seed {seed}): {source}")]
    Stage {
        stage: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the `omrl` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Format { .. } | Error::FingerprintMismatch { .. } | Error::Io { .. } => 3,
            Error::Csv(_) => 3,
            Error::Numeric { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
