use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "tenar", version, about = "Autoregressive models for tensor-valued time series")]
#[command(after_help = "Exit status: 0 success, 1 invalid input or usage, 2 numerical failure.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a random causal model and simulate a series from it.
    Simulate(SimulateArgs),
    /// Estimate a model from a series.
    Fit(FitArgs),
    /// Choose the order and K-ranks by information criterion.
    Select(SelectArgs),
    /// Predict the observation after the end of a series.
    Forecast(ForecastArgs),
    /// Rolling one-step evaluation against baselines.
    Eval(EvalArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
}

/// Options shared by every command that takes randomness or a config file.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file of default values; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    /// Tensor dimensions, e.g. 3,3,3.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Autoregressive order; must match the length of --kranks.
    #[arg(long)]
    pub p: Option<usize>,
    /// K-rank of each lag, e.g. 2,2.
    #[arg(long, value_delimiter = ',')]
    pub kranks: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct FitOptArgs {
    /// proj, lse or mle.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Random restarts of the low-rank step in the projection estimator.
    #[arg(long)]
    pub cp_restarts: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Spectral radius of the companion matrix.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Series length.
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Noise covariance setting: I (identity), II (dense) or III (separable).
    #[arg(long)]
    pub setting: Option<String>,
    /// Series output; `.bin` selects the binary format.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Generating model output [default: <out>.model.json].
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub fit: FitOptArgs,
    /// Input series (CSV or binary).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Noise structure of the fitted model: dense or separable.
    #[arg(long)]
    pub noise: Option<String>,
    /// Model output.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Fit report (JSON) [default: stdout].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Add asymptotic standard errors and confidence intervals to the report.
    #[arg(long)]
    pub inference: bool,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub fit: FitOptArgs,
    #[arg(long, short)]
    pub input: PathBuf,
    /// Largest order considered.
    #[arg(long)]
    pub pmax: Option<usize>,
    /// Largest K-rank considered per lag.
    #[arg(long)]
    pub rmax: Option<usize>,
    /// ic1 or ic2.
    #[arg(long)]
    pub penalty: Option<String>,
    /// joint or separate.
    #[arg(long)]
    pub mode: Option<String>,
    /// Selection report (JSON) [default: stdout].
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub input: PathBuf,
    /// Prediction output as a one-observation series [default: CSV on stdout].
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub fit: FitOptArgs,
    #[arg(long, short)]
    pub input: PathBuf,
    /// 1-based index of the first forecast target.
    #[arg(long)]
    pub t0: Option<usize>,
    /// Refit every this many origins; 0 fits once.
    #[arg(long)]
    pub refit_every: Option<usize>,
    /// Baselines among iar, var, mean, rw, es [default: all].
    #[arg(long, value_delimiter = ',')]
    pub baselines: Option<Vec<String>>,
    /// Detrend by exponential smoothing; the factor defaults to 2/64.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.03125")]
    pub detrend: Option<f64>,
    /// Lag order of the iAR and VAR baselines [default: the TenAR order].
    #[arg(long)]
    pub order: Option<usize>,
    /// Summary table (CSV) [default: stdout].
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-target squared errors (CSV).
    #[arg(long)]
    pub steps: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, short)]
    pub model: PathBuf,
}
