//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SqgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at index {index} ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("negative power requires a mean-zero field, mode (0,0) = {re:e}{im:+e}i")]
    NonzeroMean { re: f64, im: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("no positivity window: {0}")]
    NoWindow(String),

    #[error("resolution guard violated: {0}")]
    Resolution(String),

    #[error("positivity margin violated: {0}")]
    Margin(String),

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}; suggested dt = {suggested:e}")]
    Cfl { dt: f64, limit: f64, suggested: f64 },

    #[error("solver blow-up at t = {t:e}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("missing baseline {path}: run `sqglab regression --config <dir> --freeze` to create it")]
    MissingBaseline { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SqgError>;
