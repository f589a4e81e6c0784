//! Distribution families fitted by the boosting loop.

mod linalg;
pub mod mvn;
pub mod univariate;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mvn::{
    build_scale_matrix, fisher_information, fit_theta_from_moments, kl_divergence, marginal_mle,
    natural_gradient, nll, param_count, sample, score, to_moment_form, MomentForm, Mvn,
    ScaleMatrix, ThetaVector, DIAG_EPS,
};
pub use univariate::{uv_fisher, uv_marginal_mle, uv_natural_gradient, uv_nll, uv_score};

/// A distribution family in its unconstrained parameterization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// p-dimensional Gaussian, θ = (μ, ν).
    Mvn { p: usize },
    /// Scalar Gaussian, θ = (μ, log σ).
    Univariate,
}

impl Family {
    pub fn mvn(p: usize) -> Result<Self> {
        param_count(p)?;
        Ok(Family::Mvn { p })
    }

    pub fn target_dim(&self) -> usize {
        match self {
            Family::Mvn { p } => *p,
            Family::Univariate => 1,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Family::Mvn { p } => (p * p + 3 * p) / 2,
            Family::Univariate => 2,
        }
    }

    fn as_mvn(&self) -> Option<Mvn> {
        match self {
            Family::Mvn { p } => Some(Mvn::new(*p).expect("validated dimension")),
            Family::Univariate => None,
        }
    }

    pub fn nll(&self, theta: &[f64], y: &[f64]) -> f64 {
        match self.as_mvn() {
            Some(d) => d.nll(theta, y),
            None => uv_nll([theta[0], theta[1]], y[0]),
        }
    }

    pub fn score(&self, theta: &[f64], y: &[f64], out: &mut [f64]) {
        match self.as_mvn() {
            Some(d) => d.score(theta, y, out),
            None => out.copy_from_slice(&uv_score([theta[0], theta[1]], y[0])),
        }
    }

    pub fn natural_gradient(&self, theta: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        match self.as_mvn() {
            Some(d) => d.natural_gradient(theta, y, out),
            None => {
                out.copy_from_slice(&uv_natural_gradient([theta[0], theta[1]], y[0]));
                Ok(())
            }
        }
    }

    /// Marginal maximum-likelihood θ over the target rows.
    pub fn marginal_init(&self, y: ArrayView2<f64>) -> Result<Vec<f64>> {
        if y.ncols() != self.target_dim() {
            return Err(Error::DimensionMismatch { expected: self.target_dim(), got: y.ncols() });
        }
        match self {
            Family::Mvn { .. } => Ok(marginal_mle(y)?.into_values()),
            Family::Univariate => Ok(uv_marginal_mle(y.column(0))?.to_vec()),
        }
    }
}
