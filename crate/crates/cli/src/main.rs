//! `spinxfer`: simulate, design and convert coherence-transfer pulses.

mod args;
mod commands;
mod job;
mod output;
mod plot;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command};
use output::{CliError, Outcome};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let (cli, argv) = match cli.command {
        Command::Run { ref job } => match job::expand(job, cli.threads) {
            Ok(expanded) => expanded,
            Err(e) => return report(Err(e)),
        },
        _ => (cli, argv),
    };
    let start = Instant::now();
    report(commands::dispatch(cli, &argv[1..], start))
}

fn report(result: Result<Outcome, CliError>) -> ExitCode {
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
