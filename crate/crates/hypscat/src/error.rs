use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("continued fraction did not converge after {iterations} iterations (partial value {partial})")]
    NoConvergence { iterations: usize, partial: num_complex::Complex64 },
    #[error("eigensolver: {0}")]
    Eigen(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("kernel extraction: {0}")]
    Kernel(String),
    #[error("root finding: {0}")]
    RootFinding(String),
    #[error("expression: {0}")]
    Expression(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
