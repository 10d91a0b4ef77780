use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RankError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A probability estimate hit 0 or 1, so its logit is infinite.
    #[error("degenerate estimate{}: {reason}", edge.map(|(i, j)| format!(" on edge ({i}, {j})")).unwrap_or_default())]
    DegenerateEstimate {
        edge: Option<(usize, usize)>,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RankError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        RankError::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RankError::Io {
            path: path.into(),
            source,
        }
    }
}
