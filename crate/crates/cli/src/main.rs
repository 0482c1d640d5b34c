mod args;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::{read_config, render, ExperimentConfig};
use run::{execute, Failure};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn real_main(cli: Cli) -> Result<bool, Failure> {
    let config = match cli.command {
        Command::Replay(r) => {
            let text = std::fs::read_to_string(&r.file)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", r.file.display())))?;
            let mut cfg = read_config(&text).map_err(Failure::Usage)?;
            if let Some(f) = cli.format {
                cfg.format = f;
            }
            cfg
        }
        command => ExperimentConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            format: cli.format.unwrap_or_default(),
            command,
        },
    };
    let outcome = execute(&config.command)?;
    let text = render(&config, &outcome.results).map_err(|e| Failure::Numeric(e.to_string()))?;
    match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Numeric(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(outcome.ok)
}
