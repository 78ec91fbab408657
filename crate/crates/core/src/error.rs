//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the spectral kernels, norms, solvers and probes.
#[derive(Debug, Error)]
pub enum KgsError {
    /// Sample or coefficient buffer length does not match the grid.
    #[error("shape mismatch: expected {expected} values for the grid, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A multiplier symbol evaluated to a non-finite value.
    #[error("non-finite multiplier value at xi = ({xi:?})")]
    NonFiniteSymbol { xi: [f64; 3] },

    /// A weighted sum left the representable range.
    #[error("overflow in {context}: {advice}")]
    Overflow { context: String, advice: String },

    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few usable shells (or rows) for a fit.
    #[error("insufficient data: {got} usable {what}, need at least {need}")]
    InsufficientData {
        what: &'static str,
        got: usize,
        need: usize,
    },

    /// The time integrator produced a non-finite value.
    #[error("divergence at step {step} (t = {time}): non-finite field values")]
    Divergence { step: usize, time: f64 },

    /// Configuration file failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KgsError>;
