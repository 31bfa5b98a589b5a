//! Crate-wide error type and result alias.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A ratings line could not be parsed. Line numbers are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A caller-supplied value violates an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Filtering removed every user, or the record list was empty.
    #[error("dataset is empty after filtering")]
    EmptyDataset,

    /// A run configuration value is missing, malformed, or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A gradient or loss became non-finite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged. Carries the last finite parameter snapshot when one
    /// exists so the caller can checkpoint it.
    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged {
        epoch: usize,
        message: String,
        last_good: Option<Box<crate::hybrid::HybridModel>>,
    },

    /// Two clusters polarized to the same pattern; the memory cannot store
    /// duplicates.
    #[error(
        "pattern collision: clusters {first} and {second} polarize to the same \
         {n}-bit pattern; retry with a different latent dimension or seed"
    )]
    PatternCollision {
        first: usize,
        second: usize,
        n: usize,
    },

    /// A noise spec refers to gate or measurement sites outside the circuit it
    /// was bound to.
    #[error("noise spec binding error: {0}")]
    NoiseBinding(String),

    /// A pipeline stage was invoked before the stage that produces its input.
    #[error("missing artifact `{artifact}`: run `{stage}` first")]
    MissingUpstream {
        stage: &'static str,
        artifact: String,
    },

    /// Report assembly failed (no metrics found, or a metrics file is corrupt).
    #[error("report error: {0}")]
    Report(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Another command holds the output directory lock.
    #[error("output directory is locked by {0} (remove the file if stale)")]
    Locked(PathBuf),

    /// An artifact file failed format validation.
    #[error("artifact error in {path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 input/config, 3 pipeline order,
    /// 4 report, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::EmptyDataset
            | Error::Config(_)
            | Error::Io { .. }
            | Error::Locked(_)
            | Error::Artifact { .. } => 2,
            Error::MissingUpstream { .. } => 3,
            Error::Report(_) => 4,
            _ => 1,
        }
    }
}
