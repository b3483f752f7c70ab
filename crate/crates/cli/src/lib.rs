//! Command-line driver: run configuration, command execution and report
//! rendering for the `melnikov` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use commands::{execute, RunError};
use config::{Command, Format, RunConfig};

/// Loads `path`, applies command-line overrides, runs, and writes the
/// report to `out` (stdout when unset). Returns the process exit status.
pub fn run(command: Command, path: &Path, out: Option<PathBuf>, format: Option<Format>) -> i32 {
    match run_inner(command, path, out, format) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(command: Command, path: &Path, out: Option<PathBuf>, format: Option<Format>) -> Result<i32, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io { path: path.display().to_string(), source })?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.command = command;
    if out.is_some() {
        cfg.out = out;
    }
    if let Some(f) = format {
        cfg.format = f;
    }
    let outcome = execute(&cfg)?;
    let body = match cfg.format {
        Format::Csv => outcome.report.to_csv(),
        Format::Json => outcome.report.to_json(),
    };
    match &cfg.out {
        Some(p) => fs::write(p, body).map_err(|source| RunError::Io { path: p.display().to_string(), source })?,
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|source| RunError::Io { path: "<stdout>".into(), source })?,
    }
    if !outcome.converged {
        eprintln!("warning: some evaluations did not converge");
        return Ok(2);
    }
    Ok(0)
}
