use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ssp_core::cli_io::{cmd_experiment, cmd_shifted, cmd_solve, cmd_verify, EXIT_CONFIG};

/// Sample-average approximation experiments for stochastic saddle-point problems.
#[derive(Parser)]
#[command(name = "ssp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Paths {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for reports and the run manifest.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the population saddle problem.
    Solve(Paths),
    /// Run the excess-risk study and fit its rate.
    Experiment(Paths),
    /// Probe curvature and Lipschitz constants.
    Verify(Paths),
    /// Check the shifted-process, symmetrization and localization inequalities.
    Shifted(Paths),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG as u8),
            };
        }
    };
    let code = match cli.command {
        Command::Solve(p) => cmd_solve(&p.config, &p.out),
        Command::Experiment(p) => cmd_experiment(&p.config, &p.out),
        Command::Verify(p) => cmd_verify(&p.config, &p.out),
        Command::Shifted(p) => cmd_shifted(&p.config, &p.out),
    };
    ExitCode::from(code as u8)
}
