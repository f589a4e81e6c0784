//! Multivariate Gaussian in the unconstrained precision-factor parameterization.
//!
//! A parameter vector θ of length M = (p² + 3p)/2 holds the mean μ₁…μ_p
//! followed by the entries ν_ij (i ≤ j) of an upper-triangular factor L in
//! row-major order: ν₁₁, ν₁₂, …, ν₁p, ν₂₂, …, ν_pp. The factor is
//!
//! ```text
//! a_ii = exp(ν_ii) + ε,   a_ij = ν_ij (i < j),   a_ij = 0 (i > j)
//! ```
//!
//! with ε = [`DIAG_EPS`], and the precision matrix is Σ⁻¹ = LᵀL. The
//! perturbation keeps L invertible for any finite θ; it is applied when L is
//! materialized and never stored in θ.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg;
use crate::error::{Error, Result};

/// Perturbation added to the diagonal of L.
pub const DIAG_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Number of unconstrained parameters for a p-dimensional Gaussian.
pub fn param_count(p: usize) -> Result<usize> {
    if p == 0 {
        return Err(Error::InvalidDimension("target dimension must be at least 1".into()));
    }
    Ok((p * p + 3 * p) / 2)
}

/// Position of ν_ij (0-based, i ≤ j) inside θ.
pub fn nu_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < p);
    // rows before i contribute p, p-1, ..., p-i+1 entries
    p + i * p - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Unconstrained parameters of one Gaussian prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    dim: usize,
    values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        let m = param_count(dim)?;
        if values.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta entry {k} is not finite ({})",
                values[k]
            )));
        }
        Ok(Self { dim, values })
    }

    /// Builds θ from a mean and the ν entries in row-major upper-triangular order.
    pub fn from_parts(mean: &[f64], nu: &[f64]) -> Result<Self> {
        let mut values = mean.to_vec();
        values.extend_from_slice(nu);
        Self::new(mean.len(), values)
    }

    /// Target dimension p.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> &[f64] {
        &self.values[..self.dim]
    }

    pub fn nu(&self) -> &[f64] {
        &self.values[self.dim..]
    }

    /// ν_ij for 0-based i ≤ j.
    pub fn nu_at(&self, i: usize, j: usize) -> f64 {
        self.values[nu_index(self.dim, i, j)]
    }
}

/// Upper-triangular factor L of the precision matrix, with positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl ScaleMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.dim), self.entries.clone())
            .expect("square storage")
    }

    /// Σ⁻¹ = LᵀL.
    pub fn precision(&self) -> Array2<f64> {
        let p = self.dim;
        Array2::from_shape_vec((p, p), linalg::gram_inner(&self.entries, p)).expect("square")
    }

    /// Σ = L⁻¹ L⁻ᵀ, via triangular inversion.
    pub fn covariance(&self) -> Array2<f64> {
        let p = self.dim;
        let inv = linalg::upper_inverse(&self.entries, p);
        Array2::from_shape_vec((p, p), linalg::gram_outer(&inv, p)).expect("square")
    }

    /// log |Σ| = −2 Σ log a_ii.
    pub fn log_det_covariance(&self) -> f64 {
        -2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// ‖L v‖².
    pub fn whitened_norm_sq(&self, v: &[f64]) -> f64 {
        let p = self.dim;
        (0..p)
            .map(|i| {
                let e: f64 = (i..p).map(|j| self.entries[i * p + j] * v[j]).sum();
                e * e
            })
            .sum()
    }
}

/// Mean and covariance of a Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentForm {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
}

/// Residual z = μ − y and its whitened image η = L z.
#[derive(Clone, Debug)]
pub(crate) struct WhitenedResiduals {
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
}

impl WhitenedResiduals {
    fn new(l: &[f64], p: usize, mean: &[f64], y: &[f64]) -> Self {
        let z: Vec<f64> = mean.iter().zip(y).map(|(m, v)| m - v).collect();
        let eta = (0..p)
            .map(|i| (i..p).map(|j| l[i * p + j] * z[j]).sum())
            .collect();
        Self { z, eta }
    }
}

/// The p-dimensional Gaussian family on raw parameter slices.
///
/// These methods assume well-formed input and are what the boosting loop
/// calls per row; the free functions of this module validate and delegate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mvn {
    p: usize,
    m: usize,
}

impl Mvn {
    pub fn new(p: usize) -> Result<Self> {
        Ok(Self { p, m: param_count(p)? })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_params(&self) -> usize {
        self.m
    }

    /// Row-major entries of L.
    pub fn scale_entries(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut l = vec![0.0; p * p];
        let mut k = p;
        for i in 0..p {
            for j in i..p {
                l[i * p + j] = if i == j { theta[k].exp() + DIAG_EPS } else { theta[k] };
                k += 1;
            }
        }
        l
    }

    pub fn nll(&self, theta: &[f64], y: &[f64]) -> f64 {
        let p = self.p;
        let l = self.scale_entries(theta);
        let w = WhitenedResiduals::new(&l, p, &theta[..p], y);
        let quad: f64 = w.eta.iter().map(|e| 0.5 * e * e).sum();
        let log_diag: f64 = (0..p).map(|i| l[i * p + i].ln()).sum();
        quad - log_diag + p as f64 * HALF_LN_2PI
    }

    /// Gradient of [`Mvn::nll`] with respect to θ, written into `out`.
    pub fn score(&self, theta: &[f64], y: &[f64], out: &mut [f64]) {
        let p = self.p;
        let l = self.scale_entries(theta);
        let w = WhitenedResiduals::new(&l, p, &theta[..p], y);
        // dl/dμ_i = Σ_{j≤i} η_j a_ji
        for i in 0..p {
            out[i] = (0..=i).map(|j| w.eta[j] * l[j * p + i]).sum();
        }
        let mut k = p;
        for i in 0..p {
            for j in i..p {
                out[k] = if i == j {
                    // ∂a_ii/∂ν_ii = exp(ν_ii); log a_ii uses the perturbed diagonal
                    let e = theta[k].exp();
                    e * (w.eta[i] * w.z[i] - 1.0 / l[i * p + i])
                } else {
                    w.eta[i] * w.z[j]
                };
                k += 1;
            }
        }
    }

    /// Fisher information (M×M, row-major). Depends on θ only.
    pub fn fisher(&self, theta: &[f64]) -> Vec<f64> {
        let (p, m) = (self.p, self.m);
        let l = self.scale_entries(theta);
        let precision = linalg::gram_inner(&l, p);
        let cov = linalg::gram_outer(&linalg::upper_inverse(&l, p), p);
        let mut f = vec![0.0; m * m];
        for i in 0..p {
            for j in 0..p {
                f[i * m + j] = precision[i * p + j];
            }
        }
        for i in 0..p {
            let e = theta[nu_index(p, i, i)].exp();
            let a = l[i * p + i];
            let ii = nu_index(p, i, i);
            f[ii * m + ii] = e * e * (cov[i * p + i] + 1.0 / (a * a));
            for q in (i + 1)..p {
                let iq = nu_index(p, i, q);
                let v = e * cov[i * p + q];
                f[ii * m + iq] = v;
                f[iq * m + ii] = v;
                for j in (i + 1)..p {
                    let ij = nu_index(p, i, j);
                    f[ij * m + iq] = cov[j * p + q];
                }
            }
        }
        f
    }

    /// Solves Fisher · g = score for the natural gradient, written into `out`.
    pub fn natural_gradient(&self, theta: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        self.score(theta, y, out);
        let fisher = self.fisher(theta);
        solve_metric(&fisher, self.m, out).ok_or_else(|| Error::SingularMetric {
            theta: theta.to_vec(),
        })
    }

    /// One draw: solve L w = u for standard normal u, return μ + w.
    pub fn sample_row<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R, out: &mut [f64]) {
        let p = self.p;
        let l = self.scale_entries(theta);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        linalg::solve_upper(&l, p, out);
        for (v, mu) in out.iter_mut().zip(&theta[..p]) {
            *v += mu;
        }
    }
}

/// Solves a symmetric PD system in place, escalating diagonal jitter from
/// 1e-9 to 1e-3 times the mean diagonal when the factorization fails.
pub(crate) fn solve_metric(metric: &[f64], m: usize, rhs: &mut [f64]) -> Option<()> {
    let base = (0..m).map(|i| metric[i * m + i]).sum::<f64>() / m as f64;
    let mut factor = 0.0;
    loop {
        let jittered;
        let a = if factor == 0.0 {
            metric
        } else {
            let mut tmp = metric.to_vec();
            for i in 0..m {
                tmp[i * m + i] += factor * base;
            }
            jittered = tmp;
            &jittered
        };
        if let Some(g) = linalg::cholesky_lower(a, m) {
            linalg::cholesky_solve(&g, m, rhs);
            return rhs.iter().all(|v| v.is_finite()).then_some(());
        }
        factor = if factor == 0.0 { 1e-9 } else { factor * 10.0 };
        if factor > 1e-3 * 1.000_001 || !base.is_finite() || base <= 0.0 {
            return None;
        }
    }
}

fn check_y(theta: &ThetaVector, y: &[f64]) -> Result<()> {
    if y.len() != theta.dim() {
        return Err(Error::DimensionMismatch { expected: theta.dim(), got: y.len() });
    }
    Ok(())
}

fn family(theta: &ThetaVector) -> Mvn {
    Mvn { p: theta.dim, m: theta.values.len() }
}

/// Materializes L from θ.
pub fn build_scale_matrix(theta: &ThetaVector) -> ScaleMatrix {
    ScaleMatrix { dim: theta.dim, entries: family(theta).scale_entries(&theta.values) }
}

/// Mean and covariance Σ = (LᵀL)⁻¹ computed by triangular inversion.
pub fn to_moment_form(theta: &ThetaVector) -> MomentForm {
    let l = build_scale_matrix(theta);
    MomentForm { mean: Array1::from(theta.mean().to_vec()), covariance: l.covariance() }
}

/// Negative log density of y.
pub fn nll(theta: &ThetaVector, y: &[f64]) -> Result<f64> {
    check_y(theta, y)?;
    Ok(family(theta).nll(&theta.values, y))
}

/// Gradient of the negative log density with respect to θ.
pub fn score(theta: &ThetaVector, y: &[f64]) -> Result<Vec<f64>> {
    check_y(theta, y)?;
    let mut out = vec![0.0; theta.values.len()];
    family(theta).score(&theta.values, y, &mut out);
    Ok(out)
}

/// Fisher information of the log score at θ.
pub fn fisher_information(theta: &ThetaVector) -> Array2<f64> {
    let m = theta.values.len();
    Array2::from_shape_vec((m, m), family(theta).fisher(&theta.values)).expect("square")
}

/// Fisher-preconditioned score.
pub fn natural_gradient(theta: &ThetaVector, y: &[f64]) -> Result<Vec<f64>> {
    check_y(theta, y)?;
    let mut out = vec![0.0; theta.values.len()];
    family(theta).natural_gradient(&theta.values, y, &mut out)?;
    Ok(out)
}

/// `n` i.i.d. draws (n×p), deterministic for a given seed.
pub fn sample(theta: &ThetaVector, n: usize, seed: u64) -> Array2<f64> {
    let p = theta.dim;
    let fam = family(theta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n, p));
    let mut row = vec![0.0; p];
    for mut r in out.rows_mut() {
        fam.sample_row(&theta.values, &mut rng, &mut row);
        r.iter_mut().zip(&row).for_each(|(d, s)| *d = *s);
    }
    out
}

/// Inverse of [`to_moment_form`].
pub fn fit_theta_from_moments(mean: &[f64], covariance: ArrayView2<f64>) -> Result<ThetaVector> {
    let p = mean.len();
    param_count(p)?;
    if covariance.dim() != (p, p) {
        return Err(Error::DimensionMismatch { expected: p, got: covariance.nrows() });
    }
    let cov: Vec<f64> = covariance.iter().copied().collect();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    let g = linalg::cholesky_lower(&cov, p)
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky of covariance failed".into()))?;
    // Σ = G Gᵀ  ⇒  Σ⁻¹ = U Uᵀ with U = G⁻ᵀ upper triangular
    let mut gt = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            gt[i * p + j] = g[j * p + i];
        }
    }
    let precision = linalg::gram_outer(&linalg::upper_inverse(&gt, p), p);
    // Σ⁻¹ = C Cᵀ with C lower, so L = Cᵀ
    let c = linalg::cholesky_lower(&precision, p)
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky of precision failed".into()))?;
    let mut values = mean.to_vec();
    for i in 0..p {
        for j in i..p {
            let a = c[j * p + i];
            if i == j {
                if a <= DIAG_EPS {
                    return Err(Error::NotPositiveDefinite(format!(
                        "precision factor diagonal {a} does not exceed the {DIAG_EPS} perturbation"
                    )));
                }
                values.push((a - DIAG_EPS).ln());
            } else {
                values.push(a);
            }
        }
    }
    ThetaVector::new(p, values)
}

/// Mean and 1/n covariance of the rows of `y`.
pub fn sample_moments(y: ArrayView2<f64>) -> Result<MomentForm> {
    let (n, p) = y.dim();
    if n == 0 {
        return Err(Error::EmptyInput("no target rows".into()));
    }
    let mean = y.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let centered = &y - &mean;
    let covariance = centered.t().dot(&centered) / n as f64;
    debug_assert_eq!(covariance.dim(), (p, p));
    Ok(MomentForm { mean, covariance })
}

/// Constant θ maximizing the likelihood of the rows of `y`.
pub fn marginal_mle(y: ArrayView2<f64>) -> Result<ThetaVector> {
    let (n, p) = y.dim();
    param_count(p)?;
    if n <= p {
        return Err(Error::SingularCovariance(format!("{n} rows for {p} target dimensions")));
    }
    let moments = sample_moments(y)?;
    let cov: Vec<f64> = moments.covariance.iter().copied().collect();
    let g = linalg::cholesky_lower(&cov, p)
        .ok_or_else(|| Error::SingularCovariance("Cholesky failed".into()))?;
    for j in 0..p {
        let rel = g[j * p + j] * g[j * p + j] / cov[j * p + j];
        if !(rel > 1e-10) {
            return Err(Error::SingularCovariance(format!("pivot {j} is degenerate")));
        }
    }
    fit_theta_from_moments(moments.mean.as_slice().expect("contiguous"), moments.covariance.view())
        .map_err(|e| Error::SingularCovariance(e.to_string()))
}

/// KL(from ‖ to) between two Gaussians of the same dimension:
/// ½[tr(Σ_to⁻¹ Σ_from) + Δμᵀ Σ_to⁻¹ Δμ − p + ln(|Σ_to| / |Σ_from|)].
pub fn kl_divergence(from: &ThetaVector, to: &ThetaVector) -> Result<f64> {
    if from.dim != to.dim {
        return Err(Error::DimensionMismatch { expected: from.dim, got: to.dim });
    }
    let p = from.dim;
    let l_from = build_scale_matrix(from);
    let l_to = build_scale_matrix(to);
    // tr(Σ_to⁻¹ Σ_from) = ‖L_to L_from⁻¹‖²_F
    let from_inv = linalg::upper_inverse(l_from.as_slice(), p);
    let mut trace = 0.0;
    for i in 0..p {
        for j in i..p {
            let v: f64 = (i..=j).map(|k| l_to.get(i, k) * from_inv[k * p + j]).sum();
            trace += v * v;
        }
    }
    let dmu: Vec<f64> = to.mean().iter().zip(from.mean()).map(|(a, b)| a - b).collect();
    let maha = l_to.whitened_norm_sq(&dmu);
    let log_det_ratio = l_to.log_det_covariance() - l_from.log_det_covariance();
    Ok((0.5 * (trace + maha - p as f64 + log_det_ratio)).max(0.0))
}
