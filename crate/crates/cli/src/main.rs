mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use args::{Cli, Command};

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim(), 2),
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Profile(a) => commands::profile(a),
        Command::SoftmaxEval(a) => commands::softmax_eval(a),
        Command::Montecarlo(a) => commands::montecarlo(a),
        Command::Traffic(a) => commands::traffic(a),
        Command::Lut(a) => commands::lut(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
