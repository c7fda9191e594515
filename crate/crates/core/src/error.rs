use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("response of record {0} is not observed")]
    Unobserved(usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("perfect separation in propensity fit: {0}; refit with L2 regularization")]
    Separation(String),

    #[error("singular linear system (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },

    #[error("no convergence after {iterations} iterations (final objective {final_objective})")]
    NonConvergence {
        iterations: usize,
        final_objective: f64,
        trace: Vec<f64>,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
