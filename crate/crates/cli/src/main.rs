//! `kwgen`: one binary for data generation, training, decoding, benchmarking
//! and serving. Every command that writes files also writes a run manifest
//! next to them.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv = std::env::args_os()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::execute(cli.command, argv) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kwgen: error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
