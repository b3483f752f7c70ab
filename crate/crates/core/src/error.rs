use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: String, t: f64 },

    #[error("step size underflow at t = {t} (last good state {state:?})")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("solution blew up between t = {t_lo} and t = {t_hi}")]
    BlowUp { t_lo: f64, t_hi: f64 },

    #[error("step budget exhausted at t = {t}")]
    MaxSteps { t: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("no homoclinic loop at these parameters: {0}")]
    NoHomoclinicLoop(String),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
