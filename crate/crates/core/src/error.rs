//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input dimensions or bit counts do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Inconsistent or out-of-range configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Frame synchronisation failed (correlation peak below threshold).
    #[error("alignment error: {0}")]
    Alignment(String),
    /// A numerical scheme left its stable operating region.
    #[error("divergence error: {0}")]
    Divergence(String),
    /// Numerical integration did not reach the requested tolerance.
    #[error("tolerance error: {0}")]
    Tolerance(String),
    /// Training could not produce usable parameters.
    #[error("training failure: {0}")]
    Training(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
