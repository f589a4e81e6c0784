//! Evaluation metrics for predicted Gaussians: log score, RMSE of the mean,
//! KL divergence to a known truth and χ²-based prediction regions.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, ln_gamma};

use crate::distributions::{self, Mvn, ThetaVector};
use crate::error::{Error, Result};

/// Default prediction-region level.
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nll_mean: f64,
    pub rmse: f64,
    pub kl_mean: Option<f64>,
    pub pr_alpha: f64,
    pub pr_coverage: f64,
    pub pr_area_mean: f64,
    pub n_points: usize,
}

impl MetricsReport {
    /// Column label for region metrics, e.g. "90% PR".
    pub fn pr_label(&self) -> String {
        format!("{}% PR", format_percent(self.pr_alpha))
    }

    pub fn csv_header(&self) -> Vec<String> {
        let pr = self.pr_label();
        let mut h = vec!["n_points".to_string(), "nll".into(), "rmse".into()];
        if self.kl_mean.is_some() {
            h.push("kl".into());
        }
        h.push(format!("{pr} cov"));
        h.push(format!("{pr} area"));
        h
    }

    pub fn csv_values(&self) -> Vec<String> {
        let mut v = vec![self.n_points.to_string(), self.nll_mean.to_string(), self.rmse.to_string()];
        if let Some(kl) = self.kl_mean {
            v.push(kl.to_string());
        }
        v.push(self.pr_coverage.to_string());
        v.push(self.pr_area_mean.to_string());
        v
    }

    /// Two-column aligned text table.
    pub fn to_text(&self) -> String {
        let rows: Vec<(String, String)> = self
            .csv_header()
            .into_iter()
            .zip(self.csv_values())
            .collect();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

fn format_percent(alpha: f64) -> String {
    let pct = alpha * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

fn check_pairs(thetas: ArrayView2<f64>, ys: ArrayView2<f64>) -> Result<Mvn> {
    if thetas.nrows() == 0 {
        return Err(Error::EmptyInput("no rows to evaluate".into()));
    }
    if thetas.nrows() != ys.nrows() {
        return Err(Error::DimensionMismatch { expected: thetas.nrows(), got: ys.nrows() });
    }
    let mvn = Mvn::new(ys.ncols())?;
    if thetas.ncols() != mvn.n_params() {
        return Err(Error::DimensionMismatch { expected: mvn.n_params(), got: thetas.ncols() });
    }
    Ok(mvn)
}

fn rows(a: ArrayView2<f64>) -> Array2<f64> {
    a.as_standard_layout().into_owned()
}

/// Mean negative log-likelihood over rows (lower is better).
pub fn mean_nll(thetas: ArrayView2<f64>, ys: ArrayView2<f64>) -> Result<f64> {
    let mvn = check_pairs(thetas, ys)?;
    let (t, y) = (rows(thetas), rows(ys));
    let (t, y) = (t.as_slice().expect("standard layout"), y.as_slice().expect("standard layout"));
    let per_row: Vec<f64> = t
        .par_chunks(mvn.n_params())
        .zip(y.par_chunks(mvn.dim()))
        .map(|(t, y)| mvn.nll(t, y))
        .collect();
    Ok(per_row.iter().sum::<f64>() / per_row.len() as f64)
}

/// Root mean squared error of the predicted means over all N·p entries.
pub fn rmse(thetas: ArrayView2<f64>, ys: ArrayView2<f64>) -> Result<f64> {
    let mvn = check_pairs(thetas, ys)?;
    let p = mvn.dim();
    let mut sq = 0.0;
    for (t, y) in thetas.outer_iter().zip(ys.outer_iter()) {
        for j in 0..p {
            let e = y[j] - t[j];
            sq += e * e;
        }
    }
    Ok((sq / (thetas.nrows() * p) as f64).sqrt())
}

/// CDF of the χ² distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(dof as f64 / 2.0, x / 2.0)
    }
}

fn chi2_pdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Inverse χ² CDF by bracketing bisection followed by Newton polishing.
pub fn chi2_quantile(dof: usize, alpha: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidDimension("chi-square needs at least 1 degree of freedom".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(dof, hi) < alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(dof, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 * hi.max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = chi2_cdf(dof, x) - alpha;
        let d = chi2_pdf(dof, x);
        if !(d > 0.0) {
            break;
        }
        let next = (x - f / d).clamp(lo, hi);
        let done = (next - x).abs() < 1e-14 * x.max(1.0);
        x = next;
        if done {
            break;
        }
    }
    Ok(x)
}

/// Whether y lies in the α prediction region: ‖L(y − μ)‖² ≤ χ²_{p,α}.
pub fn pr_covered(theta: &ThetaVector, y: &[f64], alpha: f64) -> Result<bool> {
    if y.len() != theta.dim() {
        return Err(Error::DimensionMismatch { expected: theta.dim(), got: y.len() });
    }
    let q = chi2_quantile(theta.dim(), alpha)?;
    Ok(mahalanobis_sq(theta, y) <= q)
}

fn mahalanobis_sq(theta: &ThetaVector, y: &[f64]) -> f64 {
    let l = distributions::build_scale_matrix(theta);
    let r: Vec<f64> = y.iter().zip(theta.mean()).map(|(a, b)| a - b).collect();
    l.whitened_norm_sq(&r)
}

/// Volume of the α prediction hyper-ellipse,
/// (2π)^{p/2} / (p Γ(p/2)) · (χ²_{p,α})^{p/2} · |Σ|^{1/2}.
pub fn pr_area(theta: &ThetaVector, alpha: f64) -> Result<f64> {
    let p = theta.dim();
    let q = chi2_quantile(p, alpha)?;
    Ok(region_volume_factor(p, q) * sqrt_det_cov(theta))
}

fn region_volume_factor(p: usize, q: f64) -> f64 {
    let half = p as f64 / 2.0;
    (2.0 * std::f64::consts::PI).powf(half) / (p as f64 * gamma(half)) * q.powf(half)
}

/// |Σ|^{1/2} = 1 / ∏ a_ii.
fn sqrt_det_cov(theta: &ThetaVector) -> f64 {
    let l = distributions::build_scale_matrix(theta);
    1.0 / (0..theta.dim()).map(|i| l.get(i, i)).product::<f64>()
}

fn theta_rows(thetas: ArrayView2<f64>, p: usize) -> Result<Vec<ThetaVector>> {
    thetas
        .outer_iter()
        .map(|r| ThetaVector::new(p, r.to_vec()))
        .collect()
}

/// All metrics for predicted θ rows against observed targets.
///
/// When true θ rows are supplied the report includes the mean of
/// KL(predicted ‖ true), the divergence from the predicted distribution to
/// the generating one.
pub fn evaluate(
    thetas_pred: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    thetas_true: Option<ArrayView2<f64>>,
    alpha: f64,
) -> Result<MetricsReport> {
    let mvn = check_pairs(thetas_pred, ys)?;
    let p = mvn.dim();
    let n = ys.nrows();
    let q = chi2_quantile(p, alpha)?;
    let factor = region_volume_factor(p, q);
    let preds = theta_rows(thetas_pred, p)?;

    let kl_mean = match thetas_true {
        Some(t) => {
            if t.dim() != thetas_pred.dim() {
                return Err(Error::DimensionMismatch { expected: thetas_pred.nrows(), got: t.nrows() });
            }
            let truth = theta_rows(t, p)?;
            let kls: Vec<f64> = truth
                .par_iter()
                .zip(preds.par_iter())
                .map(|(truth, pred)| distributions::kl_divergence(pred, truth))
                .collect::<Result<_>>()?;
            Some(kls.iter().sum::<f64>() / n as f64)
        }
        None => None,
    };

    let mut covered = 0usize;
    let mut area = 0.0;
    for (theta, y) in preds.iter().zip(ys.outer_iter()) {
        let y = y.to_vec();
        if mahalanobis_sq(theta, &y) <= q {
            covered += 1;
        }
        area += factor * sqrt_det_cov(theta);
    }

    Ok(MetricsReport {
        nll_mean: mean_nll(thetas_pred, ys)?,
        rmse: rmse(thetas_pred, ys)?,
        kl_mean,
        pr_alpha: alpha,
        pr_coverage: covered as f64 / n as f64,
        pr_area_mean: area / n as f64,
        n_points: n,
    })
}

/// Mean and standard error (sample SD / √R) across replications.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}
