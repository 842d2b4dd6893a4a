//! Adaptive Gaussian predictive process approximation.
//!
//! Knots for a predictive process are picked from a candidate set by a pivoted, incomplete
//! Cholesky factorization that stops as soon as the largest residual variance meets a
//! tolerance. The resulting low-rank factor drives `O(N m^2)` Gaussian process regression and
//! random-walk Metropolis over covariance parameters, re-selecting knots for every proposal.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod lowrank;
pub mod mcmc;
pub mod report;

pub use error::{Error, Result};
