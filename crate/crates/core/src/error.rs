use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate group: no positive-label samples in group {0}")]
    DegenerateGroup(char),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("invalid step size for finite differences: {0}")]
    StepSize(f64),

    #[error("party index {index} out of range for {parties} parties")]
    PartyIndex { index: usize, parties: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("security violation: parties {parties:?} hold at most 2 features ({widths:?})")]
    Security { parties: Vec<usize>, widths: Vec<usize> },

    #[error("divergence at round {round}: {what} is not finite")]
    Divergence { round: usize, what: &'static str },

    #[error("ingestion error at row {row}, column `{column}`: {msg}")]
    Ingest { row: usize, column: String, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Security { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::Ingest { .. } | Error::Schema(_) | Error::Data(_) | Error::Io { .. } | Error::Csv(_) => 5,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
