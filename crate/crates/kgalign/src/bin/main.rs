//! Command-line entry point; all logic lives in the library's commands module.

use clap::Parser;
use kgalign::commands::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
