//! `rabisim` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "rabisim", version, about = "Simulate Rabi-driven photon generation, SWAP and Bell protocols")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration. Falls back to built-in device parameters when the
    /// default path does not exist.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub frame: Option<FrameArg>,
    /// Disable decoherence.
    #[arg(long, global = true)]
    pub ideal: bool,
    /// Fock levels per mode.
    #[arg(long, global = true, value_name = "N")]
    pub fock_dim: Option<usize>,
    #[arg(long, global = true, overrides_with = "no_svg")]
    pub svg: bool,
    #[arg(long, global = true, overrides_with = "svg")]
    pub no_svg: bool,
    /// Concurrent simulations in sweeps and studies.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Jc,
    Drive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Fock,
    Swap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryArg {
    Swap,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate |n> in memory 1 and reconstruct its characteristic function.
    Fock {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Move |n> from memory 1 to memory 2.
    Swap {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Share one photon between the memories and map the joint characteristic function.
    Bell,
    /// Sweep a hold time and locate the optimum.
    Calibrate {
        #[arg(long, value_enum)]
        protocol: SweepArg,
        #[arg(long)]
        n: Option<usize>,
        /// Sweep start in us (default half the analytic time).
        #[arg(long)]
        tmin: Option<f64>,
        /// Sweep end in us (default 1.5 times the analytic time).
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
    /// Photon numbers during a SWAP hold.
    Trajectory {
        #[arg(long, value_enum, default_value = "swap")]
        protocol: TrajectoryArg,
        #[arg(long)]
        n: Option<usize>,
        /// Hold length in us (default four single-photon SWAP times).
        #[arg(long)]
        until: Option<f64>,
        #[arg(long, default_value_t = 401)]
        samples: usize,
    },
    /// Generation fidelity against ramp time and coherence.
    RampStudy {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "200,20")]
        ramps_ns: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        multipliers: Vec<f64>,
    },
    /// Run every invariant and oracle check.
    Validate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.common, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
