use std::fmt;

use crate::normalize::NormalizationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("channel `{0}` has no present values to fill from")]
    UnfillableChannel(String),

    #[error("inputs share no dates in the requested range")]
    NoOverlap,

    #[error("unknown feature channel `{0}`")]
    UnknownFeature(String),

    #[error("insufficient history: {rows} contiguous rows for a {lookback}-day window")]
    InsufficientHistory { rows: usize, lookback: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no model passed the ASHRAE Guideline 14 gate")]
    NoValidBaseline { report: Box<NormalizationReport> },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }
}
