//! `tvra`: simulate, verify and sweep time-varying resource allocation
//! scenarios.
//!
//! Exit codes: 0 success, 1 a `verify` check failed, 2 configuration or
//! I/O error, 3 the simulation diverged or the problem became infeasible.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tvra::scenario::Algorithm;

#[derive(Parser)]
#[command(
    name = "tvra",
    version,
    about = "Distributed time-varying resource allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; write trace.csv, events.csv, summary.json and plots.
    Simulate(SimulateArgs),
    /// Integrate with the oracle and check the settling and tracking guarantees.
    Verify(VerifyArgs),
    /// Print the theoretical settling-time bounds as JSON.
    Bounds {
        /// Scenario file or built-in name (case1, case2, case3).
        scenario: String,
    },
    /// Re-run a scenario over values of one parameter; write sweep.csv.
    Sweep(SweepArgs),
    /// Re-render the plots of a saved trace.csv.
    Plot {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Ff,
    ProjFf,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Ff => Algorithm::Ff,
            AlgorithmArg::ProjFf => Algorithm::ProjFf,
        }
    }
}

/// Overrides applied to a scenario before it is run.
#[derive(Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario file or built-in name (case1, case2, case3).
    pub scenario: String,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Integration step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated horizon in seconds.
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Keep every K-th step in the trace.
    #[arg(long, default_value_t = 100)]
    pub decimate: usize,
    /// Replace sign(v) by v / (|v| + DELTA).
    #[arg(long, value_name = "DELTA")]
    pub smooth_sign: Option<f64>,
    /// Output directory [default: $TVRA_OUT or ./tvra-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 10)]
    pub decimate: usize,
    /// Tolerance on the dual spread and the estimator error.
    #[arg(long, default_value_t = 1e-3)]
    pub tol_consensus: f64,
    /// Tolerance on |e_i| and |imbalance|.
    #[arg(long, default_value_t = 1e-2)]
    pub tol_kkt: f64,
    /// Tolerance on max_i |x_i - x*_i| after settling.
    #[arg(long, default_value_t = 2e-2)]
    pub tol_track: f64,
    /// Seconds a metric must stay below tolerance to count as settled.
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Metric {
    Tsol,
    Track,
    Switches,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// `gains.<name>`, `dt` or `t_end`.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Column echoed to standard output.
    #[arg(long, value_enum, default_value_t = Metric::Tsol)]
    pub metric: Metric,
    #[arg(long, default_value_t = 100)]
    pub decimate: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a).map(|()| true),
        Command::Verify(a) => commands::verify(&a),
        Command::Bounds { scenario } => commands::bounds(&scenario).map(|()| true),
        Command::Sweep(a) => commands::sweep(&a).map(|()| true),
        Command::Plot { trace, out } => commands::plot(&trace, out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
