//! `pose-integrity` — runway pose estimation with runtime integrity
//! monitoring.
//!
//! Exit codes across subcommands: 0 success (all frames accepted /
//! converged), 1 input or usage error, 2 any frame rejected or
//! non-convergent.

mod cli;
mod commands;
mod formats;

use clap::Parser;

use crate::cli::{Cli, Command};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; everything else is an input
            // error (exit 1 per the exit-code contract, not clap's 2).
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };

    let result = match &cli.command {
        Command::Check(args) => commands::cmd_check(args),
        Command::Pnp(args) => commands::cmd_pnp(args),
        Command::Softargmax(args) => commands::cmd_softargmax(args),
        Command::Calibrate(args) => commands::cmd_calibrate(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
