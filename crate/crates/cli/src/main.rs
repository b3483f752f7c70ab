use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use melnikov_cli::config::{Command, Format};

/// Melnikov functions, certified zeros and splitting checks for the
/// built-in models.
#[derive(Parser, Debug)]
#[command(name = "melnikov", version)]
struct Cli {
    /// What to compute
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (flat `key = value` file)
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (overrides `run.format`)
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    ExitCode::from(melnikov_cli::run(cli.command, &cli.config, cli.out, cli.format) as u8)
}
