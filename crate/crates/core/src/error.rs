use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("invalid structure constants: {0}")]
    InvalidAlgebra(String),
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
    #[error("invalid control signal: {0}")]
    InvalidControl(String),
    #[error("window [{t0}, {t1}] is empty or outside [0, {limit}]")]
    InvalidWindow { t0: f64, t1: f64, limit: f64 },
    #[error("non-finite extremal state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("index {index} out of range for trajectory of {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("transcription infeasible: endpoint residual {residual:e} after all restarts")]
    Infeasible { residual: f64 },
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

pub(crate) fn check_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { what, value })
    }
}
