mod commands;
mod config;
mod error;
mod input;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{Flags, Mode, RunConfig};
use crate::error::CliError;

fn run(flags: &Flags) -> Result<(), CliError> {
    let cfg = RunConfig::load(flags)?;
    match cfg.mode {
        Mode::Simulate => commands::simulate(&cfg),
        Mode::Fit => commands::fit(&cfg, false),
        Mode::Stream => commands::fit(&cfg, true),
        Mode::Monitor => commands::monitor(&cfg),
    }
}

fn main() -> ExitCode {
    let flags = match Flags::try_parse() {
        Ok(f) => f,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brsl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
