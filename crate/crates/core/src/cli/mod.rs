//! Command-line surface: argument parsing and dispatch.

pub mod commands;
pub mod data;
pub mod model_file;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{cmd_benchmark, cmd_evaluate, cmd_predict, cmd_simulate, cmd_train};
pub use data::{read_csv, DatasetSpec, MinMax, Table};
pub use model_file::{ModelFile, TrainingMetadata, FORMAT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "mvngb", version, about = "Multivariate Gaussian natural gradient boosting")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a bivariate simulation dataset and its generating parameters.
    Simulate(SimulateArgs),
    /// Fit a model on a CSV dataset.
    Train(TrainArgs),
    /// Predict distribution parameters for every row of a CSV.
    Predict(PredictArgs),
    /// Score a model on a CSV with targets.
    Evaluate(EvaluateArgs),
    /// Run the simulation study.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[arg(short, long)]
    pub n: usize,
    /// modified | williams-original
    #[arg(long, default_value = "modified")]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Truth sidecar path (defaults to `<out stem>.truth.csv`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Boosting and tree hyperparameters shared by train and benchmark.
#[derive(Clone, Debug, Args)]
pub struct BoostFlags {
    #[arg(long, default_value_t = 1000)]
    pub n_stages: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long, default_value_t = 2)]
    pub min_samples_split: usize,
}

impl Default for BoostFlags {
    fn default() -> Self {
        Self {
            n_stages: 1000,
            learning_rate: 0.01,
            patience: 50,
            max_depth: 3,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column names, in order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    /// Feature column names (defaults to every non-target column).
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Separate validation file; overrides --val-fraction.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Fraction of rows held out for early stopping; 0 disables it.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Fit one univariate model per target.
    #[arg(long, conflicts_with = "plain_gradient")]
    pub independent: bool,
    /// Fit raw gradients instead of natural gradients.
    #[arg(long)]
    pub plain_gradient: bool,
    #[arg(long)]
    pub scale_x: bool,
    #[arg(long)]
    pub scale_y: bool,
    #[command(flatten)]
    pub boost: BoostFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path (defaults to `<out stem>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Record the wall-clock time in the model metadata.
    #[arg(long)]
    pub timestamp: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Truth CSV with columns mu1,mu2,var1,var2,rho aligned with the data rows.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// CSV report path; the text report always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [500, 1000, 5000])]
    pub n_train: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub replications: usize,
    #[arg(long, value_delimiter = ',', default_values_t = ["ngb".to_string(), "indep-ngb".to_string(), "plain-gb".to_string()])]
    pub methods: Vec<String>,
    #[arg(long, default_value = "modified")]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub n_val: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Six training sizes and 50 replications; overrides --n-train and --replications.
    #[arg(long)]
    pub full_table1: bool,
    #[command(flatten)]
    pub boost: BoostFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|report| print!("{}", report.to_text())),
        Command::Benchmark(a) => cmd_benchmark(&a).map(|res| print!("{}", res.summary_table())),
    }
}
