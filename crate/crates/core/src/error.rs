use thiserror::Error;

/// Errors raised by grid, channel, estimation, precoding and sweep code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator power out of range: {value} (limit {limit})")]
    PowerOutOfRange { value: usize, limit: usize },

    #[error("dense operator materialization refused for MN = {mn} (limit {limit})")]
    DenseTooLarge { mn: usize, limit: usize },

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("tap out of range: {0}")]
    TapOutOfRange(String),

    #[error("pilot guard violation: {0}")]
    GuardViolation(String),

    #[error("pilot rows collide: paths share round-trip delay row {0}")]
    PilotRowCollision(usize),

    #[error("round-trip tap {0} is odd and cannot be halved consistently")]
    OddRoundTripTap(usize),

    #[error("estimated CSI is already outdated-scaled")]
    AlreadyScaled,

    #[error("regularized normal matrix is singular (lambda = {lambda})")]
    SingularSystem { lambda: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical contract violated: {0}")]
    NumericalContract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
