use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate score map")]
    DegenerateScoreMap,

    #[error("invalid score map: {0}")]
    InvalidScoreMap(String),

    #[error("no common features")]
    NoCommonFeatures,

    #[error("no gap")]
    NoGap,

    #[error("empty document")]
    EmptyDocument,

    #[error("detail templates {0:?} not present in series")]
    DetailAbsent(Vec<usize>),

    #[error("no detail level")]
    NoDetailLevel,

    #[error("invalid structure spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's input or environment rather
    /// than by the analysis itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DegenerateScoreMap
                | Error::InvalidScoreMap(_)
                | Error::EmptyDocument
                | Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
                | Error::MalformedCsv(_)
                | Error::Io { .. }
                | Error::Csv(_)
        )
    }
}
