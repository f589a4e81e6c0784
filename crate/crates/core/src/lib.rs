//! Natural gradient boosting for multivariate Gaussian probabilistic regression.
//!
//! Regression trees are boosted on the Fisher-preconditioned gradients of the
//! negative log-likelihood to predict, for every input row, the mean and a
//! Cholesky-factored precision matrix of a multivariate Gaussian.

pub mod boosting;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod simulation;
pub mod trees;

pub use error::{Error, Result};
