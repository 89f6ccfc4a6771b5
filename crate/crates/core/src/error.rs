use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zero-norm vector for token `{token}`")]
    ZeroNorm { token: String },

    #[error("dictionary is empty: {0}")]
    EmptyDictionary(String),

    #[error("too few resolvable dictionary pairs: found {found}, need at least {needed}")]
    InsufficientPairs { found: usize, needed: usize },

    #[error("no singular value reaches threshold {threshold} (largest is {largest})")]
    AllSingularValuesFiltered { threshold: f64, largest: f64 },

    #[error("pivot language `{0}` absent from space")]
    PivotAbsent(String),

    #[error("underdetermined fit: {shared} shared pivot tokens for dimension {dim}")]
    Underdetermined { shared: usize, dim: usize },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("training diverged in {stage}: {detail}")]
    Divergence { stage: String, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than a
    /// failure while computing. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::Shape(_)
            | Error::ZeroNorm { .. }
            | Error::EmptyDictionary(_)
            | Error::InsufficientPairs { .. }
            | Error::AllSingularValuesFiltered { .. }
            | Error::PivotAbsent(_)
            | Error::Underdetermined { .. }
            | Error::Precondition(_)
            | Error::InvalidConfig(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Io { .. } | Error::RankDeficient | Error::Divergence { .. } | Error::Serde(_) => {
                false
            }
        }
    }
}
