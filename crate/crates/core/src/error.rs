use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A kernel or denoiser was requested at a step where σ_t = 0.
    #[error("degenerate kernel at step {step}: sigma is zero")]
    DegenerateKernel { step: usize },

    #[error("step {step} out of range 0..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance of component {component} is not positive definite")]
    NotPositiveDefinite { component: usize },

    #[error("safety partition is undefined: {0}")]
    UndefinedPartition(String),

    #[error("condition filtering removed every component of '{0}'")]
    EmptyFilteredCondition(String),

    #[error("invalid kernel bandwidth {0}; must be positive")]
    InvalidBandwidth(f64),

    #[error("schedule is not variance preserving at step {step} (alpha^2 + sigma^2 = {value})")]
    NonVpSchedule { step: usize, value: f64 },

    #[error("guidance wiring is missing the '{0}' field")]
    MissingField(&'static str),
}
