//! The five subcommands, callable in-process.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{read_csv, DatasetSpec, MinMax};
use super::model_file::{ModelFile, TrainingMetadata};
use super::{BenchmarkArgs, BoostFlags, EvaluateArgs, PredictArgs, SimulateArgs, TrainArgs};
use crate::boosting::{fit, fit_independent, BoostConfig, BoostModel, FittedModel};
use crate::distributions::{fit_theta_from_moments, Mvn, ThetaVector};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::simulation::{self, ExperimentPlan, ExperimentResults, Method, Variant};
use crate::trees::TreeParams;

const TRUTH_HEADER: [&str; 6] = ["x", "mu1", "mu2", "var1", "var2", "rho"];

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

impl BoostFlags {
    pub fn to_config(&self, natural_gradient: bool) -> BoostConfig {
        BoostConfig {
            n_stages_max: self.n_stages,
            learning_rate: self.learning_rate,
            patience: self.patience,
            natural_gradient,
            tree_params: TreeParams {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                min_samples_split: self.min_samples_split,
            },
        }
    }
}

/// Writes `x,y1,y2` rows and the generating moments to a sidecar.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let truth_path = args.truth.clone().unwrap_or_else(|| sibling(&args.out, ".truth.csv"));
    ensure_writable(&args.out, args.force)?;
    ensure_writable(&truth_path, args.force)?;
    let data = simulation::generate(args.n, variant, args.seed)?;

    let mut w = csv_writer(&args.out)?;
    w.write_record(["x", "y1", "y2"])?;
    for i in 0..data.len() {
        w.write_record([data.x[[i, 0]], data.y[[i, 0]], data.y[[i, 1]]].map(|v| v.to_string()))?;
    }
    w.flush()?;

    let mut w = csv_writer(&truth_path)?;
    w.write_record(TRUTH_HEADER)?;
    for (i, m) in data.moments.iter().enumerate() {
        w.write_record([data.x[[i, 0]], m.mu1, m.mu2, m.var1, m.var2, m.rho].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Row indices split into (train, validation) by a seeded shuffle.
fn holdout(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Usage(format!("--val-fraction must lie in [0, 1), got {fraction}")));
    }
    let n_val = (n as f64 * fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    if n_val > 0 {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut val = idx.split_off(n - n_val);
    idx.sort_unstable();
    val.sort_unstable();
    Ok((idx, val))
}

/// Fits a model, writes it with its training log, and returns it.
pub fn cmd_train(args: &TrainArgs) -> Result<ModelFile> {
    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".log.csv"));
    ensure_writable(&args.out, args.force)?;
    ensure_writable(&log_path, args.force)?;
    let config = args.boost.to_config(!args.plain_gradient);
    config.validate()?;

    let table = read_csv(&args.data)?;
    let spec = DatasetSpec::resolve(&table, &args.targets, &args.features, args.scale_x, args.scale_y)?;
    let x_all = table.select(&spec.feature_columns)?;
    let y_all = table.select(&spec.target_columns)?;

    let (mut xt, mut yt, mut xv, mut yv) = match &args.val {
        Some(path) => {
            let vt = read_csv(path)?;
            (x_all, y_all, vt.select(&spec.feature_columns)?, vt.select(&spec.target_columns)?)
        }
        None => {
            let (tr, va) = holdout(table.n_rows(), args.val_fraction, args.seed)?;
            (
                x_all.select(Axis(0), &tr),
                y_all.select(Axis(0), &tr),
                x_all.select(Axis(0), &va),
                y_all.select(Axis(0), &va),
            )
        }
    };
    let p = spec.target_columns.len();
    if xt.nrows() <= p {
        return Err(Error::Data(format!(
            "{} training rows for {p} targets; need more rows than targets",
            xt.nrows()
        )));
    }

    let x_scaling = if spec.scale_x { Some(MinMax::fit(xt.view())?) } else { None };
    let y_scaling = if spec.scale_y { Some(MinMax::fit(yt.view())?) } else { None };
    if let Some(s) = &x_scaling {
        xt = s.apply(xt.view());
        xv = s.apply(xv.view());
    }
    if let Some(s) = &y_scaling {
        yt = s.apply(yt.view());
        yv = s.apply(yv.view());
    }

    let model = if args.independent {
        FittedModel::Independent(fit_independent(xt.view(), yt.view(), xv.view(), yv.view(), &config)?)
    } else {
        FittedModel::Joint(fit(xt.view(), yt.view(), xv.view(), yv.view(), &config)?)
    };

    let timestamp = args.timestamp.then(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("{secs}")
    });
    let metadata = TrainingMetadata { n_train: xt.nrows(), n_val: xv.nrows(), seed: args.seed, timestamp };
    let file = ModelFile::new(
        model,
        spec.feature_columns,
        spec.target_columns,
        config,
        x_scaling,
        y_scaling,
        metadata,
    );
    file.save(&args.out)?;
    write_training_log(&file, &log_path)?;
    Ok(file)
}

fn write_training_log(file: &ModelFile, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["model", "stage", "rho", "train_nll", "val_nll"])?;
    let mut write = |name: &str, m: &BoostModel| -> Result<()> {
        for r in &m.history {
            w.write_record([
                name.to_string(),
                r.stage.to_string(),
                r.rho.to_string(),
                r.train_nll.to_string(),
                r.val_nll.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    };
    match &file.model {
        FittedModel::Joint(m) => write("joint", m)?,
        FittedModel::Independent(ms) => {
            for (name, m) in file.target_names.iter().zip(&ms.models) {
                write(name, m)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Output columns of `predict` for p targets.
///
/// `mu_i` for each target, then `nu_i_j` and `sigma_i_j` over the upper
/// triangle in row-major order (1-based indices), then `nll` when the
/// input has every target column.
pub fn prediction_header(p: usize, with_nll: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=p).map(|i| format!("mu_{i}")).collect();
    let upper: Vec<(usize, usize)> = (1..=p).flat_map(|i| (i..=p).map(move |j| (i, j))).collect();
    h.extend(upper.iter().map(|(i, j)| format!("nu_{i}_{j}")));
    h.extend(upper.iter().map(|(i, j)| format!("sigma_{i}_{j}")));
    if with_nll {
        h.push("nll".into());
    }
    h
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    ensure_writable(&args.out, args.force)?;
    let file = ModelFile::load(&args.model)?;
    let table = read_csv(&args.data)?;
    let x = table.select(&file.feature_names)?;
    let theta = file.predict_theta(x.view())?;
    let y = if table.has_columns(&file.target_names) { Some(table.select(&file.target_names)?) } else { None };

    let p = file.p;
    let mvn = Mvn::new(p)?;
    let mut w = csv_writer(&args.out)?;
    w.write_record(prediction_header(p, y.is_some()))?;
    for (i, row) in theta.outer_iter().enumerate() {
        let t = ThetaVector::new(p, row.to_vec())?;
        let cov = crate::distributions::to_moment_form(&t).covariance;
        let mut rec: Vec<String> = t.values().iter().map(|v| v.to_string()).collect();
        for a in 0..p {
            for b in a..p {
                rec.push(cov[[a, b]].to_string());
            }
        }
        if let Some(y) = &y {
            rec.push(mvn.nll(t.values(), &y.row(i).to_vec()).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// θ rows from a truth sidecar (`mu1,mu2,var1,var2,rho`).
pub fn read_truth(path: &Path) -> Result<Array2<f64>> {
    let table = read_csv(path)?;
    let cols: Vec<String> = TRUTH_HEADER[1..].iter().map(|s| s.to_string()).collect();
    let m = table.select(&cols)?;
    let mut out = Array2::zeros((m.nrows(), 5));
    for (i, r) in m.outer_iter().enumerate() {
        let c = r[4] * r[2].sqrt() * r[3].sqrt();
        let cov = ndarray::array![[r[2], c], [c, r[3]]];
        let t = fit_theta_from_moments(&[r[0], r[1]], cov.view())
            .map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(t.values()));
    }
    Ok(out)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<MetricsReport> {
    if let Some(out) = &args.out {
        ensure_writable(out, args.force)?;
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::Usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let file = ModelFile::load(&args.model)?;
    let table = read_csv(&args.data)?;
    if table.n_rows() == 0 {
        return Err(Error::EmptyInput(format!("{} has no data rows", args.data.display())));
    }
    let x = table.select(&file.feature_names)?;
    let y = table.select(&file.target_names)?;
    let theta = file.predict_theta(x.view())?;
    let truth = match &args.truth {
        Some(path) => {
            if file.p != 2 {
                return Err(Error::Data("--truth sidecars describe bivariate targets only".into()));
            }
            let t = read_truth(path)?;
            if t.nrows() != y.nrows() {
                return Err(Error::Data(format!(
                    "truth file has {} rows, data has {}",
                    t.nrows(),
                    y.nrows()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let report = evaluate(theta.view(), y.view(), truth.as_ref().map(|t| t.view()), args.alpha)?;
    if let Some(out) = &args.out {
        let mut w = csv_writer(out)?;
        w.write_record(report.csv_header())?;
        w.write_record(report.csv_values())?;
        w.flush()?;
    }
    Ok(report)
}

pub fn benchmark_plan(args: &BenchmarkArgs) -> Result<ExperimentPlan> {
    let variant: Variant = args.variant.parse()?;
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let base = if args.full_table1 {
        ExperimentPlan::full_table1(variant, args.seed)
    } else {
        ExperimentPlan { n_train: args.n_train.clone(), replications: args.replications, ..ExperimentPlan::desk(variant, args.seed) }
    };
    let plan = ExperimentPlan {
        methods,
        n_val: args.n_val,
        n_test: args.n_test,
        alpha: args.alpha,
        config: args.boost.to_config(true),
        ..base
    };
    plan.validate()?;
    Ok(plan)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<ExperimentResults> {
    for name in ["results.csv", "summary.csv"] {
        ensure_writable(&args.out_dir.join(name), args.force)?;
    }
    let plan = benchmark_plan(args)?;
    let results = simulation::run_experiment(&plan)?;
    std::fs::create_dir_all(&args.out_dir)?;
    results.write_to_dir(&args.out_dir)?;
    let mut stderr = std::io::stderr();
    for (cell, err) in results.failures() {
        let _ = writeln!(stderr, "cell N={} {} rep {} failed: {err}", cell.n_train, cell.method.name(), cell.replication);
    }
    Ok(results)
}
