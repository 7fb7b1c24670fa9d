//! `nqn`: optimise, evolve and analyse detuning ramps for Rydberg chains.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "nqn", version, about = "Fast ordered-state preparation in Rydberg atom chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "tau-us")]
    pub tau_us: Option<f64>,
    #[arg(long)]
    pub segments: Option<usize>,
    /// Propagation tolerance.
    #[arg(long, default_value_t = nqn_core::propagator::DEFAULT_TOL)]
    pub tol: f64,
    /// Sampling interval of time series, μs.
    #[arg(long = "sample-us", default_value_t = 0.01)]
    pub sample_us: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multi-start ramp optimisation; writes report, best schedule and trace.
    Optimize(Common),
    /// Propagates a schedule and writes the observable trace.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Eigenvalue flow, tracked labels and Γ along a schedule.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Ground-state phase map.
    Scan {
        #[command(flatten)]
        common: Common,
        /// "dmin:dmax:steps,rmin:rmax:steps" over Δ/Ω and R_b/a.
        #[arg(long, default_value = "-4:12:17,0.5:4.5:17")]
        grid: String,
    },
    /// Schedule utilities.
    Schedule {
        #[command(subcommand)]
        action: ScheduleAction,
    },
}

#[derive(Subcommand, Debug)]
enum ScheduleAction {
    /// Writes a schedule document: the given interior knots (units of Ω),
    /// or a seeded random NQN starting ramp.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        knots: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(c) => commands::optimize(&c),
        Command::Evolve { common, schedule } => commands::evolve(&common, &schedule),
        Command::Spectrum { common, schedule } => commands::spectrum(&common, &schedule),
        Command::Scan { common, grid } => commands::scan(&common, &grid),
        Command::Schedule { action: ScheduleAction::Export { common, knots } } => {
            commands::export(&common, knots.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
