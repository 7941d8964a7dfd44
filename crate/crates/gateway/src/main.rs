use std::io::{stdout, Write};
use std::process::ExitCode;

use clap::Parser;
use lambda_gateway::cli::{execute, serve_blocking, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Serve(args) => serve_blocking(args),
        command => {
            let mut out = stdout().lock();
            execute(command, &mut out).and_then(|()| Ok(out.flush()?))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
