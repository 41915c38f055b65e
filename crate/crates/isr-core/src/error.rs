//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IsrError>;

#[derive(Debug, Error)]
pub enum IsrError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no samples with label {label} in environment {env}")]
    EmptyClass { env: u32, label: usize },
    #[error("need at least {needed} samples in environment {env}, got {got}")]
    InsufficientSamples { env: u32, needed: usize, got: usize },
    #[error("environment {0} not present in dataset")]
    UnknownEnvironment(u32),
    #[error("need at least {needed} training environments, got {got}")]
    TooFewEnvironments { needed: usize, got: usize },
    #[error("degenerate environments: {0}")]
    DegenerateEnvironments(String),
    #[error("no environment pair with covariance gap above {min_gap}")]
    InsufficientVariance { min_gap: f64 },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
