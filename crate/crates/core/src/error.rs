use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2})")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("frame {got} is not after previous frame {previous}")]
    OutOfOrderFrame { previous: u64, got: u64 },

    #[error("distance series has no valid frame")]
    EmptySeries,

    #[error("series has {valid} valid frames, need at least 3")]
    TooShort { valid: usize },

    #[error("insufficient data for feature extraction: {0}")]
    InsufficientData(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} distinct groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("ground truth and tracks share no frames")]
    NoOverlap,

    #[error("roster needs at least 2 identities, got {0}")]
    RosterTooSmall(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unsupported format version `{0}`")]
    UnknownVersion(String),

    #[error("referenced file missing: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Schema {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl ToString) -> Self {
        Error::Parse {
            line,
            message: message.to_string(),
        }
    }
}
