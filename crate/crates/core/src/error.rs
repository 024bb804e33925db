use std::path::PathBuf;

/// Errors raised by the dictionary-learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ground-truth codes are required but the batch carries none")]
    MissingGroundTruth,

    #[error("refinement set is empty (no sample has <y, z> >= {threshold})")]
    DegenerateRefinement { threshold: f64 },

    #[error("exact enumeration needs {patterns} patterns, limit is {limit}")]
    TooLarge { patterns: u128, limit: u128 },

    #[error("reweighting LP is infeasible: best mass {best_mass} < required {required}")]
    Infeasible { best_mass: f64, required: f64 },

    #[error("malformed {what} file {path:?}: {msg}")]
    Format {
        what: &'static str,
        path: PathBuf,
        msg: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
