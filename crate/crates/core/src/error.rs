use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// Data does not match the declared schema (missing, extra or mistyped columns).
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A cell could not be parsed. `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A categorical level that the fitted model never saw during training.
    #[error("unseen level `{level}` in column `{column}`")]
    UnseenLevel { column: String, level: String },

    /// Exact or numerical rank deficiency in a least-squares design.
    #[error("singular design: {0}")]
    Singular(String),

    /// A persisted artifact could not be understood.
    #[error("invalid model file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
