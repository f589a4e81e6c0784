//! Synthetic bivariate heteroscedastic data with a known conditional
//! Gaussian, and the replicated comparison runner built on it.
//!
//! For x ~ Uniform(0, π) the modified generator uses
//!
//! ```text
//! μ₁(x) = sin(2.5x)·sin(1.5x) + x      σ₁²(x) = 0.01 + 0.25·(1 − sin(2.5x))²
//! μ₂(x) = cos(3.5x)·cos(0.5x) − x²     σ₂²(x) = 0.01 + 0.25·(1 − cos(3.5x))²
//! ρ(x)  = sin(2.5x)·cos(0.5x)          Σ₁₂ = σ₁σ₂ρ
//! ```
//!
//! and the original variant drops the `+ x` and `− x²` terms.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{fit, fit_independent, BoostConfig, FittedModel};
use crate::distributions::{fit_theta_from_moments, Mvn, ThetaVector};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, mean_and_stderr, MetricsReport, DEFAULT_ALPHA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Mean functions with the added `+ x` and `− x²` trends.
    Modified,
    /// The unmodified generator without the trend terms.
    WilliamsOriginal,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Modified => "modified",
            Variant::WilliamsOriginal => "williams-original",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modified" => Ok(Variant::Modified),
            "williams-original" | "williams" => Ok(Variant::WilliamsOriginal),
            _ => Err(Error::InvalidParameter(format!("unknown variant '{s}'"))),
        }
    }
}

/// The five generating functions evaluated at one x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub var1: f64,
    pub var2: f64,
    pub rho: f64,
}

impl TrueMoments {
    pub fn at(x: f64, variant: Variant) -> Self {
        let (s25, c35) = ((2.5 * x).sin(), (3.5 * x).cos());
        let mut mu1 = s25 * (1.5 * x).sin();
        let mut mu2 = c35 * (0.5 * x).cos();
        if variant == Variant::Modified {
            mu1 += x;
            mu2 -= x * x;
        }
        Self {
            mu1,
            mu2,
            var1: 0.01 + 0.25 * (1.0 - s25).powi(2),
            var2: 0.01 + 0.25 * (1.0 - c35).powi(2),
            rho: s25 * (0.5 * x).cos(),
        }
    }

    pub fn covariance(&self) -> Array2<f64> {
        let c = self.var1.sqrt() * self.var2.sqrt() * self.rho;
        ndarray::array![[self.var1, c], [c, self.var2]]
    }
}

/// True θ at x.
pub fn true_params(x: f64, variant: Variant) -> Result<ThetaVector> {
    let m = TrueMoments::at(x, variant);
    fit_theta_from_moments(&[m.mu1, m.mu2], m.covariance().view())
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    /// n×1 inputs in [0, π].
    pub x: Array2<f64>,
    /// n×2 targets.
    pub y: Array2<f64>,
    /// n×5 generating θ per row.
    pub theta_true: Array2<f64>,
    pub moments: Vec<TrueMoments>,
    pub variant: Variant,
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Draws n rows; deterministic for a given seed.
pub fn generate(n: usize, variant: Variant, seed: u64) -> Result<SimulatedDataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let mvn = Mvn::new(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 1));
    let mut y = Array2::zeros((n, 2));
    let mut theta_true = Array2::zeros((n, mvn.n_params()));
    let mut moments = Vec::with_capacity(n);
    let mut draw = [0.0; 2];
    for i in 0..n {
        let xi = rng.random_range(0.0..std::f64::consts::PI);
        let theta = true_params(xi, variant)?;
        mvn.sample_row(theta.values(), &mut rng, &mut draw);
        x[[i, 0]] = xi;
        y[[i, 0]] = draw[0];
        y[[i, 1]] = draw[1];
        theta_true.row_mut(i).assign(&ndarray::ArrayView1::from(theta.values()));
        moments.push(TrueMoments::at(xi, variant));
    }
    Ok(SimulatedDataset { x, y, theta_true, moments, variant, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Joint multivariate Gaussian with natural gradients.
    Ngb,
    /// One univariate Gaussian per target dimension.
    IndepNgb,
    /// Joint multivariate Gaussian with raw gradients.
    PlainGb,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ngb, Method::IndepNgb, Method::PlainGb];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ngb => "ngb",
            Method::IndepNgb => "indep-ngb",
            Method::PlainGb => "plain-gb",
        }
    }

    /// Fits this method on a train/validation split.
    pub fn fit(
        &self,
        train: &SimulatedDataset,
        val: &SimulatedDataset,
        config: &BoostConfig,
    ) -> Result<FittedModel> {
        let (xt, yt, xv, yv) = (train.x.view(), train.y.view(), val.x.view(), val.y.view());
        Ok(match self {
            Method::Ngb => FittedModel::Joint(fit(xt, yt, xv, yv, config)?),
            Method::PlainGb => {
                let cfg = BoostConfig { natural_gradient: false, ..config.clone() };
                FittedModel::Joint(fit(xt, yt, xv, yv, &cfg)?)
            }
            Method::IndepNgb => FittedModel::Independent(fit_independent(xt, yt, xv, yv, config)?),
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Role of a split in sub-seed derivation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRole {
    Train = 1,
    Validation = 2,
    Test = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (N, replication, split) cell, independent of the method so
/// all methods see the same data.
pub fn sub_seed(master: u64, n_train: usize, replication: usize, role: SplitRole) -> u64 {
    let mut h = splitmix(master);
    h = splitmix(h ^ n_train as u64);
    h = splitmix(h ^ replication as u64);
    splitmix(h ^ role as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub n_train: Vec<usize>,
    pub n_val: usize,
    pub n_test: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub variant: Variant,
    pub master_seed: u64,
    pub alpha: f64,
    pub config: BoostConfig,
}

impl ExperimentPlan {
    /// R = 5 over N ∈ {500, 1000, 5000}.
    pub fn desk(variant: Variant, master_seed: u64) -> Self {
        Self {
            n_train: vec![500, 1000, 5000],
            n_val: 300,
            n_test: 1000,
            replications: 5,
            methods: Method::ALL.to_vec(),
            variant,
            master_seed,
            alpha: DEFAULT_ALPHA,
            config: BoostConfig::default(),
        }
    }

    /// R = 50 over N ∈ {500, 1000, 3000, 5000, 8000, 10000}.
    pub fn full_table1(variant: Variant, master_seed: u64) -> Self {
        Self {
            n_train: vec![500, 1000, 3000, 5000, 8000, 10000],
            replications: 50,
            ..Self::desk(variant, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter("replications and split sizes must be positive".into()));
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return Err(Error::InvalidParameter("training sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        self.config.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub n_train: usize,
    pub method: Method,
    pub replication: usize,
    pub outcome: std::result::Result<MetricsReport, String>,
}

/// Fits and evaluates one (N, method, replication) cell.
pub fn run_cell(plan: &ExperimentPlan, n_train: usize, method: Method, replication: usize) -> CellResult {
    let outcome = (|| {
        let seed = |role| sub_seed(plan.master_seed, n_train, replication, role);
        let train = generate(n_train, plan.variant, seed(SplitRole::Train))?;
        let val = generate(plan.n_val, plan.variant, seed(SplitRole::Validation))?;
        let test = generate(plan.n_test, plan.variant, seed(SplitRole::Test))?;
        let model = method.fit(&train, &val, &plan.config)?;
        let pred = model.predict_theta(test.x.view())?;
        evaluate(pred.view(), test.y.view(), Some(test.theta_true.view()), plan.alpha)
    })()
    .map_err(|e: Error| e.to_string());
    CellResult { n_train, method, replication, outcome }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub n_train: usize,
    pub method: Method,
    pub n_ok: usize,
    pub kl: (f64, f64),
    pub nll: (f64, f64),
    pub rmse: (f64, f64),
    pub pr_coverage: (f64, f64),
    pub pr_area: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    pub plan: ExperimentPlan,
    /// Sorted by (N, method, replication).
    pub cells: Vec<CellResult>,
}

/// Runs every cell of the plan; individual fit failures are recorded, not fatal.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResults> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for &n in &plan.n_train {
        for &method in &plan.methods {
            for r in 0..plan.replications {
                jobs.push((n, method, r));
            }
        }
    }
    let mut cells: Vec<CellResult> =
        jobs.into_par_iter().map(|(n, m, r)| run_cell(plan, n, m, r)).collect();
    cells.sort_by_key(|c| (c.n_train, c.method, c.replication));
    Ok(ExperimentResults { plan: plan.clone(), cells })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentResults {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(usize, Method)> =
            self.cells.iter().map(|c| (c.n_train, c.method)).collect();
        keys.dedup();
        keys.into_iter()
            .map(|(n, method)| {
                let ok: Vec<&MetricsReport> = self
                    .cells
                    .iter()
                    .filter(|c| c.n_train == n && c.method == method)
                    .filter_map(|c| c.outcome.as_ref().ok())
                    .collect();
                let col = |f: &dyn Fn(&MetricsReport) -> f64| {
                    mean_and_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                AggregateRow {
                    n_train: n,
                    method,
                    n_ok: ok.len(),
                    kl: col(&|r| r.kl_mean.unwrap_or(f64::NAN)),
                    nll: col(&|r| r.nll_mean),
                    rmse: col(&|r| r.rmse),
                    pr_coverage: col(&|r| r.pr_coverage),
                    pr_area: col(&|r| r.pr_area_mean),
                }
            })
            .collect()
    }

    pub fn summary(&self, n_train: usize, method: Method) -> Option<AggregateRow> {
        self.aggregate().into_iter().find(|a| a.n_train == n_train && a.method == method)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&CellResult, &str)> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().err().map(|e| (c, e.as_str())))
    }

    /// Per-cell CSV: N, method, replication, kl, nll, rmse, pr_coverage, pr_area.
    pub fn write_cells_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["N", "method", "replication", "kl", "nll", "rmse", "pr_coverage", "pr_area"])?;
        for c in &self.cells {
            let r = c.outcome.as_ref().ok();
            out.write_record([
                c.n_train.to_string(),
                c.method.name().to_string(),
                c.replication.to_string(),
                fmt_opt(r.and_then(|r| r.kl_mean)),
                fmt_opt(r.map(|r| r.nll_mean)),
                fmt_opt(r.map(|r| r.rmse)),
                fmt_opt(r.map(|r| r.pr_coverage)),
                fmt_opt(r.map(|r| r.pr_area_mean)),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Aggregate CSV with mean and standard error per (N, method).
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["N".to_string(), "method".into(), "n_ok".into()];
        for m in ["kl", "nll", "rmse", "pr_coverage", "pr_area"] {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_stderr"));
        }
        out.write_record(&header)?;
        for a in self.aggregate() {
            let mut rec = vec![a.n_train.to_string(), a.method.name().to_string(), a.n_ok.to_string()];
            for (mean, se) in [a.kl, a.nll, a.rmse, a.pr_coverage, a.pr_area] {
                rec.push(mean.to_string());
                rec.push(se.to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `results.csv` and `summary.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_cells_csv(std::fs::File::create(dir.join("results.csv"))?)?;
        self.write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
        Ok(())
    }

    /// Aligned text table of mean ± standard error.
    pub fn summary_table(&self) -> String {
        let label = format!("{}% PR", (self.plan.alpha * 100.0).round());
        let header = [
            "N".to_string(),
            "method".into(),
            "ok".into(),
            "KL".into(),
            "NLL".into(),
            "RMSE".into(),
            format!("{label} cov"),
            format!("{label} area"),
        ];
        let pm = |(m, se): (f64, f64)| format!("{m:.3} ± {se:.3}");
        let mut rows = vec![header.to_vec()];
        for a in self.aggregate() {
            rows.push(vec![
                a.n_train.to_string(),
                a.method.name().to_string(),
                format!("{}/{}", a.n_ok, self.plan.replications),
                pm(a.kl),
                pm(a.nll),
                pm(a.rmse),
                pm(a.pr_coverage),
                pm(a.pr_area),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for r in &rows {
            for (k, cell) in r.iter().enumerate() {
                let pad = widths[k] - cell.chars().count();
                let _ = write!(s, "{}{}  ", " ".repeat(pad), cell);
            }
            s.truncate(s.trim_end().len());
            s.push('\n');
        }
        s
    }
}

/// Windowed subset of a dataset with x in [lo, hi].
pub fn window(data: &SimulatedDataset, lo: f64, hi: f64) -> Array2<f64> {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| (lo..=hi).contains(&data.x[[i, 0]])).collect();
    let mut out = Array2::zeros((idx.len(), 2));
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).assign(&data.y.slice(s![i, ..]));
    }
    out
}
