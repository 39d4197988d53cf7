use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("map generation failed: {0}")]
    Generation(String),

    #[error("objective returned a non-finite value {value} at evaluation {evaluation}")]
    NonFiniteObjective { value: f64, evaluation: u64 },

    #[error("selection probability is not finite for glowworm {worm}")]
    NonFiniteProbability { worm: usize },

    #[error("malformed trajectory log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
