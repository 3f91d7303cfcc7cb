use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameters violate a commensurability or validity rule.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("time {t} outside [0, {horizon}]")]
    Range { t: f64, horizon: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Physical grid too small for the requested bandwidth.
    #[error("grid of size {grid} cannot hold bandwidth {bandwidth} (need at least {})", 2 * .bandwidth + 1)]
    Size { grid: usize, bandwidth: usize },

    #[error("fixed-point iteration failed at step {step}: residual {residual:e} after {iterations} iterations")]
    StepFailure {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("non-finite field value at step {step}")]
    Divergence { step: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
