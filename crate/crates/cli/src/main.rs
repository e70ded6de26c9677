//! `liouform` command-line driver.
//!
//! Exit codes: 0 ok, 1 usage, 2 invalid form, 3 incompatible or exceptional,
//! 4 solver failure, 5 assertion failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liouform::Error;

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INVALID_FORM: u8 = 2;
pub const EXIT_INCOMPATIBLE: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_ASSERTION: u8 = 5;

#[derive(Parser)]
#[command(name = "liouform", version, about = "Symplectic integrators induced by constant one-forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// harmonic, pendulum, kepler, linear:<rows separated by ;>, linear-random
    #[arg(long)]
    system: Option<String>,
    /// phi, abg, named, matrix-S, from-symplectic, preset (sweeps also take random-S)
    #[arg(long)]
    family: Option<String>,
    /// Family parameters, comma separated
    #[arg(long, allow_hyphen_values = true)]
    param: Option<String>,
    /// Step size
    #[arg(long)]
    h: Option<f64>,
    /// Number of steps
    #[arg(long)]
    steps: Option<usize>,
    /// Initial state q1..qn,p1..pn
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<String>,
    /// Degrees of freedom when no system fixes them
    #[arg(long)]
    n: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 5 when a mandated check fails
    #[arg(long)]
    assert: bool,
    /// Seed for random systems and grids
    #[arg(long)]
    seed: Option<u64>,
    /// fixed_point or newton
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    solver_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a form and print S, B, C, the induced map and its classification
    CheckForm {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the form as JSON
        #[arg(long)]
        emit_form: Option<PathBuf>,
        /// Read the form from a JSON file instead of --family
        #[arg(long)]
        form: Option<PathBuf>,
    },
    /// Integrate and write the trajectory as CSV
    Integrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Write q1 p1 columns here and a gnuplot script next to it
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Certify one scheme: step residual, symplecticity, energy drift
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Symplecticity residual across a family grid
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cayley transform of the matrix in a JSON file
    Cayley {
        matrix: PathBuf,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotExact { .. } | Error::NotSymmetric { .. } => EXIT_INVALID_FORM,
            Error::Incompatible { .. }
            | Error::Exceptional { .. }
            | Error::NotSymplectic { .. }
            | Error::NotHamiltonian { .. } => EXIT_INCOMPATIBLE,
            Error::NoConvergence { .. } | Error::DomainError { .. } => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let base = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(base.merge(common)?)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::CheckForm { common, emit_form, form } => {
            let cfg = load(&common)?;
            commands::check_form(&cfg, form.as_deref(), emit_form.as_deref())
        }
        Command::Integrate { common, plot } => {
            let cfg = load(&common)?;
            commands::integrate_cmd(&cfg, common.out.clone(), plot.as_deref())
        }
        Command::Verify { common } => {
            let cfg = load(&common)?;
            commands::verify_cmd(&cfg, common.out.clone(), common.assert)
        }
        Command::Sweep { common } => {
            let cfg = load(&common)?;
            commands::sweep_cmd(&cfg, common.out.clone(), common.assert)
        }
        Command::Cayley { matrix } => commands::cayley_cmd(&matrix),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
