//! Command-line front end for `sgdtime`.
//!
//! Every command computes all of its outputs first and only then writes
//! them, each through a temporary file that is renamed into place. A failed
//! command therefore leaves the output directory untouched.
//!
//! Exit codes: 0 success, 1 bad input (flags, files, overrides), 2 a model
//! that cannot answer the question (divergence, invalid bound parameters,
//! nonpositive `N_inf`, ...).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod bound;
mod error;
mod files;
mod fit;
mod model;
mod overrides;
mod simulate;

pub use error::{CliError, CliResult};
pub use model::DEFAULT_HARDWARE;
pub use overrides::Overrides;

/// Seed used when `--seed` is not given. Run `i` of a sweep uses
/// `seed + i`.
pub const DEFAULT_SEED: u64 = 20_170_101;

#[derive(Debug, Parser)]
#[command(name = "sgdtime", version, about = "Mini-batch SGD time-to-convergence model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Base random seed
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Model parameter override KEY=VALUE, repeatable. Overrides win over
    /// values read from --law / --hw files.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run SGD sweeps and write runs.csv
    Simulate(SimulateArgs),
    /// Fit the inverse law (law.json) and/or hardware timings (hw.json)
    Fit(FitArgs),
    /// Optimal mini-batch size per learner count, written to plan.csv
    Plan(PlanArgs),
    /// Strong, weak and optimal scaling curves, written to scaling.csv
    Scale(PlanArgs),
    /// Theoretical residual and N_Update bounds (bound.csv, nbound.csv)
    Bound(BoundArgs),
    /// Cheapest-to-fastest design search under a budget (design.json)
    Design(DesignArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// quadratic, noisy-quadratic or logistic
    #[arg(long, default_value = "noisy-quadratic")]
    pub problem: String,

    /// Mini-batch sizes, strictly increasing
    #[arg(long = "M", value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64, 128, 256])]
    pub m: Vec<usize>,

    /// Target residual(s)
    #[arg(long, value_delimiter = ',', default_values_t = [0.01f64])]
    pub eps: Vec<f64>,

    /// Number of seeds per mini-batch size
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// runs.csv to fit (default: <out>/runs.csv unless only --timings is given)
    #[arg(long)]
    pub runs: Option<PathBuf>,

    /// Timing measurements with header M,P,t_update_seconds
    #[arg(long)]
    pub timings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// law.json with n_inf, alpha
    #[arg(long)]
    pub law: Option<PathBuf>,

    /// hw.json with gamma, m_t, delta, comm_kind
    #[arg(long)]
    pub hw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Learner counts, strictly increasing
    #[arg(long = "P", value_delimiter = ',', default_values_t = [1u64, 2, 4, 8, 16, 32, 64])]
    pub p: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Target residual for nbound.csv
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,

    /// Mini-batch sizes for nbound.csv
    #[arg(long = "M", value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64, 128, 256])]
    pub m: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Catalogue CSV with header gamma,P,cost_compute,delta,cost_bandwidth
    #[arg(long)]
    pub options: Option<PathBuf>,

    /// Total budget, in the catalogue's cost units
    #[arg(long)]
    pub budget: Option<f64>,
}

/// Parse `argv` (including the program name), run the command, print one
/// summary or diagnostic line and return the process exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => return clap_exit(e),
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            0
        }
        _ => {
            let rendered = e.to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{first}");
            1
        }
    }
}

/// Run a parsed command and return its summary line.
pub fn run(cli: &Cli) -> CliResult<String> {
    let overrides = Overrides::parse(&cli.overrides)?;
    match &cli.command {
        Command::Simulate(args) => simulate::run(args, cli, overrides),
        Command::Fit(args) => fit::run(args, cli, overrides),
        Command::Plan(args) => model::plan(args, cli, overrides),
        Command::Scale(args) => model::scale(args, cli, overrides),
        Command::Bound(args) => bound::run(args, cli, overrides),
        Command::Design(args) => model::design(args, cli, overrides),
    }
}

pub(crate) fn check_increasing<T: PartialOrd + Copy>(flag: &str, xs: &[T]) -> CliResult<()> {
    if xs.is_empty() {
        return Err(CliError::input(format!("{flag} list is empty")));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::input(format!("{flag} list must be strictly increasing")));
    }
    Ok(())
}
