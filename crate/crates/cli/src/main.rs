//! `singfit`: transforms, fits, profiles and simulations of hyperinflation
//! price series from the command line.
//!
//! Exit codes: 0 on success, 2 for input or domain errors, 3 when no fit
//! start converged (the report is still written).

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod options;
mod output;

use commands::Status;
use options::{FitArgs, ProfileArgs, SimulateArgs, TransformArgs};

#[derive(Parser)]
#[command(name = "singfit", version, about = "Finite-time-singularity fits of hyperinflation data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a series through cpi/normalize/log/gri/window steps
    Transform(TransformArgs),
    /// Fit a model and write report.json and curves.csv
    Fit(FitArgs),
    /// Follow an nlf fit past its usual stop and write profile.csv
    Profile(ProfileArgs),
    /// Generate a synthetic series
    Simulate(SimulateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Transform(a) => commands::transform(a),
        Command::Fit(a) => commands::fit(a),
        Command::Profile(a) => commands::profile(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match res {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NoConvergence) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
