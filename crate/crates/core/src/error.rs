use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("preset {preset} requires a rational alpha = p/q")]
    MissingAlpha { preset: String },

    #[error("static amplitude must have a real square, got gamma = {re}{im:+}i")]
    ComplexStaticEnergy { re: f64, im: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("plane-wave truncation M = {m} is below the potential support {support}")]
    TruncationTooSmall { m: usize, support: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("Floquet operator is marginal (coincident eigenvalues); stroboscopic powers are not diagonalizable")]
    MarginalPower,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
