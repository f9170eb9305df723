use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiserError {
    #[error("field length {actual} does not match the expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("volumes finer than grid: {volumes} volumes on {cells} grid cells")]
    VolumesFinerThanGrid { volumes: usize, cells: usize },

    #[error("invalid descriptor for `{field}`: {reason}")]
    Descriptor { field: String, reason: String },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(
        "fixed-point iteration did not converge at t = {t}: relative update {residual:e} after {iterations} iterations"
    )]
    NonConvergence {
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("singular pivot {pivot:e} at row {row}")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RiserError>;
