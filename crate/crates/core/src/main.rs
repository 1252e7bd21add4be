use std::process::ExitCode;

use anytime_tdp::cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
