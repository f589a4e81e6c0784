//! Natural gradient boosting over a distribution family.
//!
//! Each stage fits one regression tree per parameter to the per-row
//! (natural) gradients of the negative log-likelihood, scales the stage by a
//! line search and applies it with a fixed learning rate:
//!
//! ```text
//! θ(x) = θ⁽⁰⁾ − learning_rate · Σ_b ρ_b · f_b(x)
//! ```

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, DIAG_EPS};
use crate::error::{Error, Result};
use crate::trees::{RegressionTree, SortedFeatures, TreeParams};

/// Line-search candidates 2⁻¹⁰ … 2⁵ in ascending order.
pub const LINE_SEARCH_GRID: [f64; 16] = [
    0.0009765625,
    0.001953125,
    0.00390625,
    0.0078125,
    0.015625,
    0.03125,
    0.0625,
    0.125,
    0.25,
    0.5,
    1.0,
    2.0,
    4.0,
    8.0,
    16.0,
    32.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_stages_max: usize,
    pub learning_rate: f64,
    pub patience: usize,
    /// `false` fits the raw score (plain gradient boosting).
    pub natural_gradient: bool,
    pub tree_params: TreeParams,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_stages_max: 1000,
            learning_rate: 0.01,
            patience: 50,
            natural_gradient: true,
            tree_params: TreeParams::default(),
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages_max == 0 {
            return Err(Error::InvalidParameter("n_stages_max must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        self.tree_params.validate()
    }
}

/// One boosting round: a scaling and one tree per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub rho: f64,
    pub trees: Vec<RegressionTree>,
}

/// Mean train / validation nll after a stage (stage 0 is the initialization).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub rho: f64,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub family: Family,
    pub n_features: usize,
    pub theta0: Vec<f64>,
    pub config: BoostConfig,
    pub stages: Vec<Stage>,
    /// Number of leading stages used for prediction.
    pub best_stage: usize,
    pub history: Vec<StageRecord>,
}

impl BoostModel {
    /// Model that predicts θ⁽⁰⁾ everywhere.
    pub fn constant(family: Family, n_features: usize, theta0: Vec<f64>, config: BoostConfig) -> Self {
        Self { family, n_features, theta0, config, stages: Vec::new(), best_stage: 0, history: Vec::new() }
    }

    pub fn n_params(&self) -> usize {
        self.theta0.len()
    }

    /// θ for one feature row using the first `n_stages` stages.
    pub fn predict_row_staged(&self, x: &[f64], n_stages: usize) -> Vec<f64> {
        let mut theta = self.theta0.clone();
        let lr = self.config.learning_rate;
        for stage in &self.stages[..n_stages.min(self.stages.len())] {
            for (t, tree) in theta.iter_mut().zip(&stage.trees) {
                *t -= lr * stage.rho * tree.predict(x);
            }
        }
        theta
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        self.predict_row_staged(x, self.best_stage)
    }

    /// θ per row (n × M) using the first `n_stages` stages.
    pub fn predict_theta_staged(&self, x: ArrayView2<f64>, n_stages: usize) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.ncols() });
        }
        let xs = flat(x);
        let m = self.n_params();
        let mut out = Array2::zeros((x.nrows(), m));
        if x.nrows() == 0 {
            return Ok(out);
        }
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(m)
            .zip(xs.par_chunks(self.n_features))
            .for_each(|(dst, row)| {
                dst.copy_from_slice(&self.predict_row_staged(row, n_stages));
            });
        Ok(out)
    }

    /// θ per row (n × M) using the stages chosen by early stopping.
    pub fn predict_theta(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.predict_theta_staged(x, self.best_stage)
    }
}

/// Contiguous row-major copy of a matrix.
fn flat(a: ArrayView2<f64>) -> Vec<f64> {
    a.as_standard_layout().iter().copied().collect()
}

/// Mean nll of θ rows (row-major n×M) against target rows (row-major n×p).
fn mean_nll(family: &Family, theta: &[f64], y: &[f64]) -> f64 {
    let (m, p) = (family.n_params(), family.target_dim());
    let per_row: Vec<f64> = theta
        .par_chunks(m)
        .zip(y.par_chunks(p))
        .map(|(t, v)| family.nll(t, v))
        .collect();
    per_row.iter().sum::<f64>() / per_row.len() as f64
}

fn total_nll_along(family: &Family, theta: &[f64], dir: &[f64], y: &[f64], rho: f64) -> f64 {
    let (m, p) = (family.n_params(), family.target_dim());
    let mut buf = vec![0.0; m];
    let mut total = 0.0;
    for (t, (d, v)) in theta.chunks(m).zip(dir.chunks(m).zip(y.chunks(p))) {
        for k in 0..m {
            buf[k] = t[k] - rho * d[k];
        }
        total += family.nll(&buf, v);
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Scaling ρ minimizing Σᵢ nll(θᵢ − ρ·dᵢ, yᵢ) over [`LINE_SEARCH_GRID`].
///
/// `theta` and `directions` are row-major n×M, `y` is row-major n×p. Ties go
/// to the smaller ρ, and if every candidate is worse than ρ = 0 the smallest
/// candidate is returned.
pub fn line_search(family: &Family, theta: &[f64], directions: &[f64], y: &[f64]) -> f64 {
    let start = total_nll_along(family, theta, directions, y, 0.0);
    let losses: Vec<f64> = LINE_SEARCH_GRID
        .par_iter()
        .map(|&rho| total_nll_along(family, theta, directions, y, rho))
        .collect();
    let mut best = 0;
    for (k, loss) in losses.iter().enumerate() {
        if *loss < losses[best] {
            best = k;
        }
    }
    if losses[best] > start {
        LINE_SEARCH_GRID[0]
    } else {
        LINE_SEARCH_GRID[best]
    }
}

/// Fits a joint multivariate Gaussian model; `Y` has p columns.
///
/// An empty validation set disables early stopping.
pub fn fit(
    x_train: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    config: &BoostConfig,
) -> Result<BoostModel> {
    let family = Family::mvn(y_train.ncols())?;
    fit_family(family, x_train, y_train, x_val, y_val, config)
}

/// The boosting loop for any family.
pub fn fit_family(
    family: Family,
    x_train: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    config: &BoostConfig,
) -> Result<BoostModel> {
    config.validate()?;
    let (n, d) = x_train.dim();
    if y_train.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y_train.nrows() });
    }
    if x_val.nrows() != y_val.nrows() {
        return Err(Error::DimensionMismatch { expected: x_val.nrows(), got: y_val.nrows() });
    }
    if x_val.nrows() > 0 && x_val.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x_val.ncols() });
    }
    if x_val.nrows() > 0 && y_val.ncols() != y_train.ncols() {
        return Err(Error::DimensionMismatch { expected: y_train.ncols(), got: y_val.ncols() });
    }
    let sorted = SortedFeatures::new(x_train)?;
    let theta0 = family.marginal_init(y_train)?;
    let m = family.n_params();
    let lr = config.learning_rate;

    let xs = flat(x_train);
    let ys = flat(y_train);
    let mut theta: Vec<f64> = theta0.iter().copied().cycle().take(n * m).collect();

    let has_val = x_val.nrows() > 0;
    let xv = flat(x_val);
    let yv = flat(y_val);
    let mut theta_val: Vec<f64> = theta0.iter().copied().cycle().take(x_val.nrows() * m).collect();

    let mut model = BoostModel::constant(family, d, theta0, config.clone());
    let val0 = has_val.then(|| mean_nll(&family, &theta_val, &yv));
    model.history.push(StageRecord {
        stage: 0,
        rho: 0.0,
        train_nll: mean_nll(&family, &theta, &ys),
        val_nll: val0,
    });
    let mut best_val = val0.unwrap_or(f64::INFINITY);
    let mut best_stage = 0;

    let p = family.target_dim();
    let mut grads = vec![0.0; n * m];
    let mut fitted = vec![0.0; n * m];
    for b in 1..=config.n_stages_max {
        let row_status: Vec<Result<()>> = grads
            .par_chunks_mut(m)
            .zip(theta.par_chunks(m).zip(ys.par_chunks(p)))
            .enumerate()
            .map(|(i, (g, (t, v)))| {
                if config.natural_gradient {
                    family.natural_gradient(t, v, g)?;
                } else {
                    family.score(t, v, g);
                }
                if g.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFiniteGradient { stage: b, row: i })
                }
            })
            .collect();
        row_status.into_iter().collect::<Result<()>>()?;

        let trees: Vec<RegressionTree> = (0..m)
            .into_par_iter()
            .map(|k| {
                let target: Vec<f64> = grads.iter().skip(k).step_by(m).copied().collect();
                sorted.fit(&target, &config.tree_params)
            })
            .collect::<Result<_>>()?;

        fitted
            .par_chunks_mut(m)
            .zip(xs.par_chunks(d))
            .for_each(|(dst, row)| {
                for (v, tree) in dst.iter_mut().zip(&trees) {
                    *v = tree.predict(row);
                }
            });
        let rho = line_search(&family, &theta, &fitted, &ys);

        for (t, f) in theta.iter_mut().zip(&fitted) {
            *t -= lr * rho * f;
        }
        let mut val_nll = None;
        if has_val {
            theta_val.par_chunks_mut(m).zip(xv.par_chunks(d)).for_each(|(t, row)| {
                for (tk, tree) in t.iter_mut().zip(&trees) {
                    *tk -= lr * rho * tree.predict(row);
                }
            });
            val_nll = Some(mean_nll(&family, &theta_val, &yv));
        }
        model.stages.push(Stage { rho, trees });
        model.history.push(StageRecord {
            stage: b,
            rho,
            train_nll: mean_nll(&family, &theta, &ys),
            val_nll,
        });

        if let Some(v) = val_nll {
            if v < best_val {
                best_val = v;
                best_stage = b;
            } else if b - best_stage >= config.patience.max(1) {
                break;
            }
        }
    }
    model.best_stage = if has_val { best_stage } else { model.stages.len() };
    Ok(model)
}

/// One univariate model per target column, each with its own early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentModel {
    pub models: Vec<BoostModel>,
}

impl IndependentModel {
    pub fn dim(&self) -> usize {
        self.models.len()
    }

    /// Diagonal-covariance multivariate θ per row (ν_ij = 0 for i < j).
    pub fn predict_theta(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let p = self.dim();
        let parts: Vec<Array2<f64>> =
            self.models.iter().map(|m| m.predict_theta(x)).collect::<Result<_>>()?;
        let m = (p * p + 3 * p) / 2;
        let mut out = Array2::zeros((x.nrows(), m));
        for (j, part) in parts.iter().enumerate() {
            let diag = crate::distributions::mvn::nu_index(p, j, j);
            for (i, row) in part.outer_iter().enumerate() {
                out[[i, j]] = row[0];
                out[[i, diag]] = precision_scale_to_nu((-row[1]).exp());
            }
        }
        Ok(out)
    }
}

/// ν_ii such that exp(ν_ii) + ε equals the given 1/σ.
fn precision_scale_to_nu(inv_sigma: f64) -> f64 {
    let a = inv_sigma - DIAG_EPS;
    if a > f64::MIN_POSITIVE {
        a.ln()
    } else {
        f64::MIN_POSITIVE.ln()
    }
}

/// Fits each target column separately with the univariate Gaussian family.
pub fn fit_independent(
    x_train: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    config: &BoostConfig,
) -> Result<IndependentModel> {
    let p = y_train.ncols();
    if p == 0 {
        return Err(Error::InvalidDimension("no target columns".into()));
    }
    let models = (0..p)
        .map(|j| {
            let yt = y_train.slice(ndarray::s![.., j..j + 1]);
            let yv = if y_val.nrows() > 0 {
                y_val.slice(ndarray::s![.., j..j + 1])
            } else {
                y_val.slice(ndarray::s![.., 0..0])
            };
            fit_family(Family::Univariate, x_train, yt, x_val, yv, config)
        })
        .collect::<Result<_>>()?;
    Ok(IndependentModel { models })
}

/// Either kind of fitted model, predicting multivariate θ rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Joint(BoostModel),
    Independent(IndependentModel),
}

impl FittedModel {
    pub fn target_dim(&self) -> usize {
        match self {
            FittedModel::Joint(m) => m.family.target_dim(),
            FittedModel::Independent(m) => m.dim(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Joint(m) => m.n_features,
            FittedModel::Independent(m) => m.models[0].n_features,
        }
    }

    pub fn predict_theta(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            FittedModel::Joint(m) => m.predict_theta(x),
            FittedModel::Independent(m) => m.predict_theta(x),
        }
    }
}
