use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing cell: run {run:?}, checkpoint {checkpoint}, example {example:?}")]
    MissingCell {
        run: String,
        checkpoint: u64,
        example: String,
    },
    #[error("duplicate cell: run {run:?}, checkpoint {checkpoint}, example {example:?}")]
    DuplicateCell {
        run: String,
        checkpoint: u64,
        example: String,
    },
    #[error("score {value} out of range [0, 1] (run {run:?}, checkpoint {checkpoint}, example {example:?})")]
    ScoreOutOfRange {
        value: f64,
        run: String,
        checkpoint: u64,
        example: String,
    },
    #[error("metadata mismatch: {0}")]
    MetaMismatch(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(u64),
    #[error("malformed record at line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("at least 2 runs are required, got {0}")]
    InsufficientRuns(usize),
    #[error("reference standard deviation must be positive, got {0}")]
    ZeroReferenceStd(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series too short: need at least 2 points, got {0}")]
    SeriesTooShort(usize),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("too few observations per example: need at least 2, got {0}")]
    TooFewObservations(usize),
    #[error("dataset too small: need at least {min} examples, got {got}")]
    DatasetTooSmall { min: usize, got: usize },
    #[error("split leaves no test examples (dev fraction {0})")]
    EmptyTestSet(f64),
    #[error("split leaves no dev examples (dev fraction {0})")]
    EmptyDevSet(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingCell { .. } => "MissingCell",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            Error::MetaMismatch(_) => "MetaMismatch",
            Error::InvalidTensor(_) => "InvalidTensor",
            Error::UnknownCheckpoint(_) => "UnknownCheckpoint",
            Error::Record { .. } => "RecordError",
            Error::Format(_) => "FormatError",
            Error::InsufficientRuns(_) => "InsufficientRuns",
            Error::ZeroReferenceStd(_) => "ZeroReferenceStd",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::SeriesTooShort(_) => "SeriesTooShort",
            Error::AxisMismatch(_) => "AxisMismatch",
            Error::TooFewObservations(_) => "TooFewObservations",
            Error::DatasetTooSmall { .. } => "DatasetTooSmall",
            Error::EmptyTestSet(_) => "EmptyTestSet",
            Error::EmptyDevSet(_) => "EmptyDevSet",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
