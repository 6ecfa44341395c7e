use thiserror::Error;

/// Errors raised by the numerical kernels and the adaptive machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is singular: pivot {pivot:e} below threshold {threshold:e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix exponential argument norm {norm:e} exceeds supported range {limit:e}")]
    OverflowRisk { norm: f64, limit: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigenvalue iteration did not converge (best estimate {best_estimate})")]
    NoConvergence { best_estimate: f64 },

    #[error("time {t} outside of [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("invalid system matrix {field}: {reason}")]
    InvalidSystem { field: &'static str, reason: String },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input signal: {0}")]
    InvalidInput(String),

    #[error("implicit Euler step with width {width:e} is singular")]
    SingularStep { width: f64 },

    #[error("Dörfler fraction {0} not in (0, 1]")]
    InvalidTheta(f64),

    #[error("interval index {index} out of range for {len} intervals")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
