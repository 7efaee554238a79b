//! Accelerated primal and dual first-order methods for convex problems with
//! affine constraints, with stochastic oracles and a decentralized layer.

pub mod decentralized;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod primal;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
