//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for simulation, ingestion and testing operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration supplied by the caller.
    #[error("input error: {0}")]
    Input(String),

    /// A CSV row could not be parsed; carries the 1-based data row number.
    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    /// The file header or row shape does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// No matching unit within tolerance could be found.
    #[error("match failure: {0}")]
    MatchFailure(String),

    /// The unlabeled pool ran out before the budget was spent.
    #[error("pool exhausted: {0}")]
    PoolExhausted(String),

    /// A linear-algebra or other numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Records were fed to a sequential state machine out of order.
    #[error("sequencing error: expected record index {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    /// The theoretical design eliminated every classifier.
    #[error("algorithm failure: {0}")]
    AlgorithmFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (CLI exit code 2);
    /// everything else is a runtime/numerical failure (exit code 3).
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Parse { .. } | Error::Schema(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
