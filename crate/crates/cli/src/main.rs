mod args;
mod chat;
mod commands;
mod error;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use args::{Cli, Command};
use error::{CliResult, EXIT_USAGE};

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Label(a) => commands::label(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Chat(a) => chat::run(a),
        Command::Pipeline(a) => pipeline::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("KBDIALOG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
