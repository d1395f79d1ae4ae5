use thiserror::Error;

/// Errors raised by the filtering, planning and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cutoff c must be positive, got {0}")]
    NonPositiveCutoff(f64),

    #[error("only p = 2 is supported, got p = {0}")]
    UnsupportedExponent(f64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("ragged grid: run {run} has {found} steps, expected {expected}")]
    RaggedGrid {
        run: usize,
        expected: usize,
        found: usize,
    },

    #[error("probability {name} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("zero clutter intensity admits at most one measurement, got {0}")]
    TooManyMeasurementsWithoutClutter(usize),

    #[error("measurement has zero likelihood under a clutter-free model")]
    ImpossibleMeasurement,

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("search space too large: {leaves} leaves exceeds guard of {limit}")]
    SearchSpaceTooLarge { leaves: u128, limit: u128 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name, value })
    }
}
