//! `gpa`: fit, serve and benchmark grid point approximation smoothers.

mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gpa", version, about = "Distributed kernel smoothing with grid point approximation")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat key=value file of flags for the chosen command; command-line
    /// flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit grid values from distributed moments and write a model file.
    Fit(FitArgs),
    /// Answer queries from a saved model.
    Predict(PredictArgs),
    /// Select a bandwidth with the one-shot or pilot selector.
    Bandwidth(BandwidthArgs),
    /// Generate a simulated sample and optionally run one strategy on it.
    Simulate(SimulateArgs),
    /// Replicated experiments: estimator, bandwidth and grid tables.
    Bench(BenchArgs),
}

const COMMANDS: [&str; 5] = ["fit", "predict", "bandwidth", "simulate", "bench"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartitionArg {
    Random,
    Sorted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Oneshot,
    Pilot,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Global,
    Oneshot,
    Gpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SupportArg {
    Compact,
    Diverging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableArg {
    Estimator,
    Bandwidth,
    Sweep,
}

/// Where training data comes from.
#[derive(Debug, Args)]
struct DataArgs {
    /// CSV with `x...` covariate columns and a `y` column.
    #[arg(long, value_name = "CSV", conflicts_with = "setting")]
    input: Option<PathBuf>,
    /// Simulation setting: 1, 2, 3, 4 or mu3.
    #[arg(long)]
    setting: Option<String>,
    /// Simulated sample size.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Noise standard deviation override for simulated data.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long, value_enum, default_value_t = PartitionArg::Random)]
    partition: PartitionArg,
}

#[derive(Debug, Args)]
struct SelectorArgs {
    /// Pilot sample size for the pilot selector.
    #[arg(long, default_value_t = 1000)]
    pilot_size: usize,
    /// Fraction trimmed from each end of the CV weight interval.
    #[arg(long, default_value_t = 0.05)]
    trim: f64,
    /// Number of candidate bandwidths.
    #[arg(long, default_value_t = 25)]
    candidates: usize,
    /// Candidate range factor: candidates span `[n^-e / C_H, C_H n^-e]`.
    #[arg(long, default_value_t = 8.0)]
    ch: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    selector: SelectorArgs,
    /// epanechnikov, fourth-order or poly:[c0,c1,...]. Defaults to the
    /// kernel matched to the interpolation order.
    #[arg(long)]
    kernel: Option<String>,
    /// Fixed bandwidth; skips selection.
    #[arg(long)]
    h: Option<f64>,
    /// Selector used when no fixed bandwidth is given. Defaults to oracle
    /// for simulated data and oneshot for CSV input.
    #[arg(long, value_enum)]
    bandwidth_method: Option<MethodArg>,
    /// Interpolation order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Constant `c` in the segment count `c (hi - lo) ln ln N / h`.
    #[arg(long, default_value_t = 1.0)]
    grid_multiplier: f64,
    /// Fixed segment count, overriding the design formula.
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long, value_enum, default_value_t = SupportArg::Compact)]
    support: SupportArg,
    /// Lower grid bound for compact support (default: data or setting range).
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Model file to write.
    #[arg(long, value_name = "JSON")]
    out: PathBuf,
    /// Also write the ledger report here.
    #[arg(long, value_name = "FILE")]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// CSV of query points.
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
    /// Interpolation order override.
    #[arg(long)]
    order: Option<usize>,
    /// Predictions CSV (default: stdout).
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BandwidthArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    selector: SelectorArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Oneshot)]
    method: MethodArg,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long, value_name = "FILE")]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation setting: 1, 2, 3, 4 or mu3.
    #[arg(long, default_value = "1")]
    setting: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the sample (x, y, mu) here.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    /// Train and predict with this strategy on a held-out test sample.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[arg(long, default_value_t = 5000)]
    n_test: usize,
    /// Bandwidth (default: the setting's AMISE-optimal value).
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long, default_value_t = 1.0)]
    grid_multiplier: f64,
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Write test points, truth and predictions here.
    #[arg(long, value_name = "CSV")]
    predictions: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = TableArg::Estimator)]
    table: TableArg,
    #[arg(long, default_value = "1")]
    setting: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    n_test: usize,
    #[arg(long, default_value_t = 50)]
    machines: usize,
    /// Replications B; replication b uses seed + b.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PartitionArg::Random)]
    partition: PartitionArg,
    /// Bandwidth for the one-shot and GPA columns.
    #[arg(long, value_enum, default_value_t = MethodArg::Oracle)]
    bandwidth_method: MethodArg,
    /// Fixed bandwidth for every column.
    #[arg(long)]
    h: Option<f64>,
    #[command(flatten)]
    selector: SelectorArgs,
    #[arg(long, default_value_t = 1.0)]
    grid_multiplier: f64,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// Sample sizes for the bandwidth table.
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,50000")]
    sizes: Vec<usize>,
    /// Pilot sizes for the bandwidth table, one per sample size.
    #[arg(long, value_delimiter = ',', default_value = "1000,1500,3000")]
    pilot_sizes: Vec<usize>,
    /// Grid factors for the sweep table; segments are `ceil(f / h)`.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
    factors: Vec<f64>,
    /// Directory for `table.json` and `table.txt`.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

fn run() -> Result<(), CliError> {
    let args = config::splice(std::env::args().collect(), &COMMANDS)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.render().to_string())),
        Err(e) => {
            let _ = e.print();
            return Ok(());
        }
    };
    let pool = gpa_core::bench::thread_pool()?;
    pool.install(|| match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Bandwidth(a) => commands::bandwidth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            if !msg.ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
