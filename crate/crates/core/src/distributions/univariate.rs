//! Univariate Gaussian with θ = (μ, log σ), used by the per-dimension baseline.

use ndarray::ArrayView1;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn uv_nll(theta: [f64; 2], y: f64) -> f64 {
    let [mu, log_sigma] = theta;
    let z = (y - mu) * (-log_sigma).exp();
    HALF_LN_2PI + log_sigma + 0.5 * z * z
}

pub fn uv_score(theta: [f64; 2], y: f64) -> [f64; 2] {
    let [mu, log_sigma] = theta;
    let inv_var = (-2.0 * log_sigma).exp();
    let r = y - mu;
    [-r * inv_var, 1.0 - r * r * inv_var]
}

/// diag(1/σ², 2)
pub fn uv_fisher(theta: [f64; 2]) -> [[f64; 2]; 2] {
    [[(-2.0 * theta[1]).exp(), 0.0], [0.0, 2.0]]
}

pub fn uv_natural_gradient(theta: [f64; 2], y: f64) -> [f64; 2] {
    let [mu, log_sigma] = theta;
    let r = y - mu;
    [-r, 0.5 * (1.0 - r * r * (-2.0 * log_sigma).exp())]
}

/// Sample mean and log of the 1/n standard deviation.
pub fn uv_marginal_mle(y: ArrayView1<f64>) -> Result<[f64; 2]> {
    let n = y.len();
    if n < 2 {
        return Err(Error::SingularCovariance(format!("{n} rows for a univariate fit")));
    }
    let mean = y.sum() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::SingularCovariance("target column is constant".into()));
    }
    Ok([mean, 0.5 * var.ln()])
}
