use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A cell that could not be parsed as a finite number.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    /// Input data violates an invariant of the data model.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied argument is outside its allowed domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested computation degenerates (zero variance, empty bins, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An optimizer reached a state that the problem structure rules out.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
