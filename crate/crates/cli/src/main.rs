use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    robust_bo_cli::main_with(robust_bo_cli::cli::Cli::parse())
}
