//! Command-line front end: synthetic benchmarks, tuning of external
//! commands, file-based ask/tell, and report tables.
//!
//! Exit status: 0 on success, 2 for configuration or input errors, 3 when
//! every trial or evaluation failed, 1 otherwise.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod history;
pub mod objective;

use std::process::ExitCode;
use std::thread;

use anyhow::anyhow;

use crate::cli::{Cli, Verb};
use crate::commands::RunArgs;
use crate::error::{CmdResult, Failure};

pub fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Verb::Bench { common } => {
            let config = common.config.as_deref().ok_or_else(|| Failure::config(anyhow!("bench needs --config")))?;
            let parallel = common.parallel.unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()));
            commands::bench(config, common.out.as_deref(), parallel, &common.overrides())
        }
        Verb::Run { command, dimension, lower, upper, budget, common } => {
            let args = RunArgs { config: common.config.clone(), command, dimension, lower, upper, budget, out: common.out.clone() };
            commands::run(&args, &common.overrides())
        }
        Verb::Suggest { history, common } => {
            commands::suggest(&history, common.config.as_deref(), &common.overrides()).map(|_| ())
        }
        Verb::Tell { history, point, value } => commands::tell(&history, &point, value),
        Verb::Report { input, out } => commands::report(&input, out.as_deref()),
    }
}

/// Runs a parsed command line and maps failures to exit codes.
pub fn main_with(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
