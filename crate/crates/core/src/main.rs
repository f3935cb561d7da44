use clap::Parser;

use dsf::cli::{run, RunConfig};

fn main() {
    let config = RunConfig::parse();
    let outcome = run(&config);
    if let Some(msg) = &outcome.message {
        eprintln!("dsf {}: {msg}", config.command.name());
    }
    std::process::exit(outcome.code);
}
