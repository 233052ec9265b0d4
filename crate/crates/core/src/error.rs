use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("inconsistent distance bracket at {point:?}: lo={lo} > hi={hi}")]
    InconsistentBracket { point: Vec<f64>, lo: f64, hi: f64 },

    #[error("no chain between {from} and {to} under constraint {constraint}")]
    Unreachable {
        from: String,
        to: String,
        constraint: &'static str,
    },

    #[error("precondition failed ({clause}): {detail}")]
    Precondition { clause: &'static str, detail: String },

    #[error("empty average: {0}")]
    EmptyAverage(String),

    #[error("unassigned reflected cubes inside requested support: {0:?}")]
    Unassigned(Vec<usize>),

    #[error("zero seminorm in denominator")]
    ZeroSeminorm,

    #[error("missing net level {0}")]
    MissingLevel(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Stable integer code used by the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::DimensionMismatch { .. } => 2,
            Error::NonFinite(_) => 3,
            Error::Unsupported(_) => 4,
            Error::InconsistentBracket { .. } => 5,
            Error::Unreachable { .. } => 6,
            Error::Precondition { .. } => 7,
            Error::EmptyAverage(_) => 8,
            Error::Unassigned(_) => 9,
            Error::ZeroSeminorm => 10,
            Error::MissingLevel(_) => 11,
            Error::Io(_) => 12,
            Error::Serde(_) => 13,
        }
    }
}
