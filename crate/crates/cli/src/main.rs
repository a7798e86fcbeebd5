//! `inputmix` command-line driver.

mod args;
mod commands;
mod outputs;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure of one CLI run, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(inputmix::Error),
}

impl From<inputmix::Error> for CliError {
    fn from(e: inputmix::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_adapter_failure() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("usage error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(&cli, a),
        Command::Calibrate(a) => commands::calibrate(&cli, a),
        Command::Configure(a) => commands::configure(&cli, a),
        Command::Inpaint(a) => commands::inpaint(&cli, a),
        Command::Evaluate(a) => commands::evaluate(&cli, a),
        Command::Sweep(a) => commands::sweep(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
