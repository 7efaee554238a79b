use thiserror::Error;

use crate::trace::RunTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    /// The dual of a primal with `mu = 0` is not smooth.
    #[error("dual is not smooth: primal strong-convexity modulus is {mu}")]
    NotStronglyConvex { mu: f64 },

    #[error("topology is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Iterates blew past the divergence guard; carries whatever trace was recorded.
    #[error("diverged at iteration {iteration}: norm {norm:e} exceeds cap {cap:e}")]
    Diverged {
        iteration: usize,
        norm: f64,
        cap: f64,
        trace: Box<RunTrace>,
    },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn contract(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
