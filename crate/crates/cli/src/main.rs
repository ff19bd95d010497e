use std::process::ExitCode;

use clap::Parser;
use necklab_cli::app::{execute, Cli};

fn main() -> ExitCode {
    ExitCode::from(execute(Cli::parse()))
}
