//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A vector or box has the wrong number of coordinates.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A numeric argument violates a precondition (NaN, wrong sign, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A grid would exceed its point budget.
    #[error("grid of {needed} points exceeds budget of {budget}")]
    GridBudget { needed: usize, budget: usize },

    /// Refinement drove the grid resolution to zero or below.
    #[error("refinement exhausted: tau {tau} after step {xi} is not positive")]
    RefinementExhausted { tau: f64, xi: f64 },

    /// Training produced a non-finite loss.
    #[error("training aborted: loss became non-finite at epoch {epoch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, last_loss: f64 },

    /// A named builtin environment does not exist.
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),

    /// Certificates from different runs were combined.
    #[error("certificate context mismatch: {0}")]
    ContextMismatch(String),

    /// An operation requires a validated certificate.
    #[error("certificate is not validated: {0}")]
    NotValidated(String),

    /// A tail query point lies inside the certified region.
    #[error("tail threshold {c} is not beyond the certified bound {bound}")]
    TailThreshold { c: f64, bound: f64 },

    /// A concentration horizon is too small for the certificate.
    #[error("horizon {n_star} does not exceed eta(s0)/epsilon = {floor}")]
    HorizonTooSmall { n_star: u64, floor: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
