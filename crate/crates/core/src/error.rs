use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the CLI exit code they map to (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // validation
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate sample: zero standard deviation")]
    DegenerateSample,
    #[error("sample {value} lies outside the support [{lower}, {upper}]")]
    OutOfSupport { value: f64, lower: f64, upper: f64 },
    #[error("mixture weight alpha = {0} is outside [0.2, 0.5] (use the override to relax to (0, 1))")]
    AlphaOutOfRange(f64),
    #[error("grid mismatch: {0} points vs {1} points")]
    GridMismatch(usize, usize),
    #[error("truncation order {requested} exceeds the {available} retained eigenfunctions")]
    TruncationExceedsRank { requested: usize, available: usize },
    #[error("smoothing parameter must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("training set of {n} pairs exceeds the configured limit of {limit}")]
    TooManyTrainingPairs { n: usize, limit: usize },
    #[error("empty set")]
    EmptySet,

    // numerical
    #[error("density integrates to zero")]
    EmptyDensity,
    #[error("exp(psi) overflows (max psi = {0}); the input density was probably not preconditioned")]
    TransformOverflow(f64),
    #[error("kernel width is zero: all training predictors are identical")]
    DegenerateKernelWidth,
    #[error("all kernel weights vanish for the query")]
    EmptyNeighbourhood,
    #[error("no hyperparameter candidate produced a finite risk")]
    NoViableCandidate,
    #[error("baseline MIAE is zero")]
    DivisionByZeroBaseline,
    #[error("linear solve failed: {0}")]
    Singular(String),

    // i/o
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("day {day}: {source}")]
    Day {
        day: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code: 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptyDensity
            | Error::TransformOverflow(_)
            | Error::DegenerateKernelWidth
            | Error::EmptyNeighbourhood
            | Error::NoViableCandidate
            | Error::DivisionByZeroBaseline
            | Error::Singular(_) => 3,
            Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } => 4,
            Error::Day { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_day(self, day: impl Into<String>) -> Self {
        Error::Day {
            day: day.into(),
            source: Box::new(self),
        }
    }
}
