use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(
        "emitter count {n} exceeds the cap of {max} (a density matrix needs 9^n complex entries)"
    )]
    CapacityExceeded { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("emitter index {index} out of range 1..={count}")]
    EmitterOutOfRange { index: usize, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid integration plan: {0}")]
    InvalidPlan(String),

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("pulse calibration failed: {0}")]
    Calibration(String),

    #[error("invalid window scheme: {0}")]
    InvalidWindows(String),

    #[error("estimator undefined: {0}")]
    UndefinedEstimate(String),

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("no data: {0}")]
    NoData(String),

    #[error("malformed click log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },

    #[error("eigendecomposition did not converge")]
    Eigen,
}

pub type Result<T> = std::result::Result<T, Error>;
