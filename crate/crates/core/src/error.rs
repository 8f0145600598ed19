//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Everything that can go wrong across grid construction, problem validation,
/// PDE solves, and the iteration drivers.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A scalar argument or configuration value is out of range.
    InvalidParameter { what: &'static str, detail: String },
    /// A field or slice does not match the grid it is used with.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A problem callback misbehaved (non-finite value, inconsistent derivative).
    InvalidProblem { what: &'static str, detail: String },
    /// A NaN or infinity appeared where a finite value is required.
    NonFinite {
        what: &'static str,
        time_level: Option<usize>,
    },
    /// Conjugate gradients failed to reach the requested residual.
    LinearSolveFailed {
        time_level: usize,
        relative_residual: f64,
    },
    /// The forward solve produced a state past the blow-up threshold (or a
    /// non-finite one) at the reported time level.
    StateBlowUp { time_level: usize, max_abs: f64 },
    /// The requested operation needs a diffusion tensor shape the solvers do
    /// not support.
    UnsupportedDiffusion(&'static str),
    /// The pointwise minimizer could not produce a usable value.
    MinimizerFailed { detail: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidParameter { what, detail } => {
                write!(f, "invalid parameter {what}: {detail}")
            }
            CoreError::ShapeMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected {expected} values, got {got}"),
            CoreError::InvalidProblem { what, detail } => {
                write!(f, "invalid problem: {what}: {detail}")
            }
            CoreError::NonFinite { what, time_level } => match time_level {
                Some(n) => write!(f, "non-finite {what} at time level {n}"),
                None => write!(f, "non-finite {what}"),
            },
            CoreError::LinearSolveFailed {
                time_level,
                relative_residual,
            } => write!(
                f,
                "linear solve stalled at time level {time_level} (relative residual {relative_residual:e})"
            ),
            CoreError::StateBlowUp {
                time_level,
                max_abs,
            } => write!(
                f,
                "state blew up at time level {time_level} (max |y| = {max_abs:e})"
            ),
            CoreError::UnsupportedDiffusion(detail) => {
                write!(f, "unsupported diffusion tensor: {detail}")
            }
            CoreError::MinimizerFailed { detail } => write!(f, "pointwise minimizer failed: {detail}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
