mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use stress_core::Error;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_DIVERGENCE,
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let argv = match config::merge_config_file(std::env::args().collect()) {
        Ok(a) => a,
        Err(config::ConfigError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let name = cli.command.name();
    let result = match cli.command {
        Command::Segment(a) => commands::segment(a),
        Command::Augment(a) => commands::augment(a),
        Command::Label(a) => commands::label(a),
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dynstress {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
