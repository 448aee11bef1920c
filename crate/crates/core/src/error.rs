use std::fmt;

use thiserror::Error;

/// One failed invariant on an input value.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("matrix is not row-stochastic: row {row} {detail}")]
    NotStochastic { row: usize, detail: String },

    #[error("chain has {} closed classes, stationary law is ambiguous: {classes:?}", .classes.len())]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("chain does not terminate: I - T is singular")]
    NonTerminating,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("phase-type support starts at 1, got {0}")]
    ZeroSupport(usize),

    #[error("index {index} out of range for {len} states")]
    BadIndex { index: usize, len: usize },

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("degenerate chain: {0}")]
    Degenerate(String),

    #[error("no transmission possible with empty battery")]
    EmptyBattery,

    #[error("no critical periods observed")]
    NoCriticalPeriods,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input-side failures map to exit code 2, numerical ones to 3.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Json(_) | Error::Io(_) | Error::SizeGuard(_)
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
