mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Format};
use commands::Failure;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match commands::run(&cli) {
        Ok(r) => r,
        Err(Failure::Usage(kind, msg)) => {
            Failure::into_clap(kind, msg, commands::name(&cli.command)).exit()
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let written = match cli.global.format {
        Format::Json => out.write_all(report.to_json(cli.global.seed).as_bytes()),
        Format::Csv => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            out.write_all(&report.csv)
        }
    };
    // A closed pipe (`| head`) is not worth a failure exit.
    if let Err(e) = written.and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if let Some(s) = &report.summary {
        eprintln!("{s}");
    }
    ExitCode::SUCCESS
}
