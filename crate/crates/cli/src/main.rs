//! `envforge` command-line front-end.
//!
//! Exit codes: 0 success or clean validation, 1 violations found, 2 usage or
//! input error, 3 solver or pipeline failure.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use envforge::Method;

#[derive(Debug, Parser)]
#[command(name = "envforge", version, about = "Robust dynamic operating envelopes for distribution feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Allocate envelopes with one method and write the result file.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value = "envforge-out")]
        out: PathBuf,
    },
    /// Solve the superellipsoid program over a range of squareness values.
    SweepK {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 1)]
        k_min: u32,
        #[arg(long, default_value_t = 7)]
        k_max: u32,
        /// Also write `sweep.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stress-test an allocation with exact power flows.
    Validate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overshoot (p.u.) tolerated before a draw counts as a violation.
        #[arg(long, default_value_t = 0.005)]
        budget: f64,
        #[arg(long)]
        vmin: Option<f64>,
        #[arg(long)]
        vmax: Option<f64>,
        /// Also write `report.json` and `draws.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several methods on one region and tabulate them.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma-separated methods; `sesd:K` pins the squareness of one row.
        #[arg(long, value_delimiter = ',', default_value = "dmtd,so,sesd,sesd:2,ellipsoid")]
        methods: Vec<String>,
        /// Also write `compare.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Network file; the feasible region is built from it.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Prebuilt feasible-region file.
    #[arg(long)]
    region: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    vmin: Option<f64>,
    #[arg(long)]
    vmax: Option<f64>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Squareness for sesd.
    #[arg(long = "K", conflicts_with = "theta")]
    k: Option<u32>,
    /// Target relative gap used to pick K for sesd (default 0.01).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = envforge::rdoe::DEFAULT_EPS_MD)]
    eps_md: f64,
    #[arg(long, default_value_t = envforge::rdoe::DEFAULT_PWL_POINTS)]
    pwl_points: usize,
    #[arg(long, default_value_t = envforge::baselines::DEFAULT_SO_CAP)]
    so_cap: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: envforge::Error| e.to_string())
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<envforge::Error> for Failure {
    fn from(e: envforge::Error) -> Self {
        use envforge::Error::*;
        let code = match e {
            Io { .. }
            | Schema(_)
            | Parse { .. }
            | UnknownBus { .. }
            | UnknownPhase { .. }
            | Disconnected(_)
            | Meshed { .. }
            | InvalidNetwork(_)
            | InvalidConfig(_)
            | TooManyCustomers { .. } => 2,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
