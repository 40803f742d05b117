//! `fluence`: simulate fluence fields, extract profiles, replicate runs and
//! fit optical coefficients from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Axis, Method};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fluence", version, about = "Monte Carlo fluence estimation and optical coefficient fitting")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the fluence field and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mc-some")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Chain trace CSV (mh only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Cut a line profile out of a field CSV.
    ExtractLine {
        field: PathBuf,
        #[arg(long = "line-axis", value_enum)]
        axis: Axis,
        /// Point `x,y,z` the line passes through.
        #[arg(long = "line-through", allow_hyphen_values = true)]
        through: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean and mean-square error over independent replicates.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mc-some")]
        method: Method,
        #[arg(long)]
        replicates: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize measurements from the config's coefficients.
    Measure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover (mu_s, mu_a) from measurements by hybrid descent.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Misfit J over a parameter grid.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Grid such as `g=0.9;mu_a=0.5,0.75,1;mu_s=95,105`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, method, seed, out, trace } => {
            commands::simulate(&config, method, seed, &out, trace.as_deref())
        }
        Command::ExtractLine { field, axis, through, out } => commands::extract_line(&field, axis, &through, &out),
        Command::Replicate { config, method, replicates, seed, out } => {
            commands::replicate(&config, method, replicates, seed, &out)
        }
        Command::Measure { config, seed, out } => commands::measure(&config, seed, &out),
        Command::Fit { config, measurements, seed, out } => commands::fit(&config, &measurements, seed, &out),
        Command::Scan { config, grid, measurements, seed, out } => {
            commands::scan(&config, &grid, &measurements, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("fluence: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fluence: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
