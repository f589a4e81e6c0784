#![allow(dead_code)]

use mvn_ngboost::distributions::{param_count, Mvn, ThetaVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random θ with μ in [-2, 2] and ν entries in [-1, 1].
pub fn random_theta<R: Rng>(rng: &mut R, p: usize) -> ThetaVector {
    let m = param_count(p).unwrap();
    let values =
        (0..m).map(|k| if k < p { rng.random_range(-2.0..2.0) } else { rng.random_range(-1.0..1.0) }).collect();
    ThetaVector::new(p, values).unwrap()
}

pub fn random_y<R: Rng>(rng: &mut R, theta: &ThetaVector) -> Vec<f64> {
    theta.mean().iter().map(|m| m + rng.random_range(-2.0..2.0)).collect()
}

/// Precision matrix assembled straight from the parameterization, without
/// going through the library's factor code.
pub fn oracle_precision(theta: &ThetaVector) -> DMatrix<f64> {
    let p = theta.dim();
    let mut l = DMatrix::zeros(p, p);
    let nu = theta.nu();
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            l[(i, j)] = if i == j { nu[k].exp() + 1e-6 } else { nu[k] };
            k += 1;
        }
    }
    l.transpose() * l
}

pub fn oracle_covariance(theta: &ThetaVector) -> DMatrix<f64> {
    oracle_precision(theta).try_inverse().unwrap()
}

/// −log N(y; μ, Σ) evaluated directly from the density with a generic
/// log-determinant.
pub fn oracle_nll(theta: &ThetaVector, y: &[f64]) -> f64 {
    let p = theta.dim();
    let cov = oracle_covariance(theta);
    let chol = cov.clone().cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let r = DVector::from_iterator(p, y.iter().zip(theta.mean()).map(|(a, b)| a - b));
    let quad = (r.transpose() * chol.solve(&r))[(0, 0)];
    0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Draws from N(μ, Σ) using nalgebra's lower Cholesky of Σ.
pub fn oracle_draws(theta: &ThetaVector, n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand_distr::StandardNormal;
    let p = theta.dim();
    let g = oracle_covariance(theta).cholesky().unwrap().l();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let u = DVector::from_iterator(p, (0..p).map(|_| r.sample::<f64, _>(StandardNormal)));
            let w = &g * u;
            (0..p).map(|i| theta.mean()[i] + w[i]).collect()
        })
        .collect()
}

pub fn family(p: usize) -> Mvn {
    Mvn::new(p).unwrap()
}

/// Central finite-difference gradient of the library nll.
pub fn fd_gradient(theta: &ThetaVector, y: &[f64]) -> Vec<f64> {
    let mvn = family(theta.dim());
    let base = theta.values().to_vec();
    (0..base.len())
        .map(|k| {
            let h = 1e-6 * base[k].abs().max(1.0);
            let mut up = base.clone();
            let mut dn = base.clone();
            up[k] += h;
            dn[k] -= h;
            (mvn.nll(&up, y) - mvn.nll(&dn, y)) / (2.0 * h)
        })
        .collect()
}

/// Relative error with the denominator floored at 1.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
