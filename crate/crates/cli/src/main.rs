//! `covariant`: dimensional analysis, covariant normalization, pipeline
//! audits and the two reference experiments from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 domain error, 3 failed check.

/// `println!` that ignores a closed stdout instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod audit;
mod dim;
mod exp;
mod io;
mod normalize;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "covariant", version, about = "Units- and frame-covariant learning toolkit", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimensional analysis: solve for power products and Pi groups.
    #[command(subcommand)]
    Dim(dim::DimCommand),
    /// Fit or apply a covariant normalizer to CSV data.
    #[command(subcommand)]
    Normalize(normalize::NormalizeCommand),
    /// Lint pipelines and test trained functions for covariance.
    #[command(subcommand)]
    Audit(audit::AuditCommand),
    /// Run the blackbody or pendulum experiment.
    #[command(subcommand)]
    Exp(exp::ExpCommand),
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(covariant_core::Error),
    /// The command ran but a checked property did not hold.
    Check(String),
}

impl From<covariant_core::Error> for Failure {
    fn from(e: covariant_core::Error) -> Self {
        Failure::Domain(e)
    }
}

pub type CmdResult = Result<(), Failure>;

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Dim(c) => dim::run(c),
        Command::Normalize(c) => normalize::run(c),
        Command::Audit(c) => audit::run(c),
        Command::Exp(c) => exp::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: covariant <COMMAND>\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
