use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

mod commands;
mod output;

use commands::*;

/// Cones of finite-dimensional operator systems, decided by certified PSD feasibility.
#[derive(Debug, Parser)]
#[command(name = "matcone", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write report.json and certificates/*.json into this directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
enum Command {
    /// Quotient norm of an element of M_n/J_n or T_n/J_n.
    Norm(NormArgs),
    /// Cone membership with a verified certificate.
    Membership(MembershipArgs),
    /// Dual-cone membership of a functional and its concrete image.
    Dual(DualArgs),
    /// Sample-based check that a map is a complete order isomorphism.
    CoiVerify(CoiArgs),
    /// PSD completion of a banded partial matrix.
    Complete(CompleteArgs),
    /// Max-cone lifts of near-boundary (M_n/J_n) ⊗ T instances.
    Pstar(PropertyArgs),
    /// Banded max-cone lifts of near-boundary (T_n/J_n) ⊗ T instances.
    Ps(PropertyArgs),
    /// Min/max tensor-cone gap experiment.
    GapSearch(GapArgs),
    /// Factor Σ u_i u_j* ⊗ A_ij as Σ_k Y_k Y_k*.
    Factorize(FactorizeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Norm(_) => "norm",
            Command::Membership(_) => "membership",
            Command::Dual(_) => "dual",
            Command::CoiVerify(_) => "coi-verify",
            Command::Complete(_) => "complete",
            Command::Pstar(_) => "pstar",
            Command::Ps(_) => "ps",
            Command::GapSearch(_) => "gap-search",
            Command::Factorize(_) => "factorize",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Internal(String),
}

impl From<matcone::Error> for CliError {
    fn from(e: matcone::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

const EXIT_INVALID: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

fn run(cli: &Cli) -> Result<u8, CliError> {
    let outcome = match &cli.command {
        Command::Norm(a) => norm(a)?,
        Command::Membership(a) => membership(a)?,
        Command::Dual(a) => dual(a)?,
        Command::CoiVerify(a) => coi_verify(a)?,
        Command::Complete(a) => complete(a)?,
        Command::Pstar(a) => property(a, false)?,
        Command::Ps(a) => property(a, true)?,
        Command::GapSearch(a) => gap(a)?,
        Command::Factorize(a) => factorize(a)?,
    };
    let config = output::to_value(&cli.command)?;
    let report = output::envelope(cli.command.name(), &config, &outcome);
    print!("{}", output::pretty(&report));
    if let Some(dir) = &cli.out {
        output::write_dir(dir, &report, &outcome)?;
    }
    if let Some(msg) = &outcome.verification_failure {
        eprintln!("error: verification failed: {msg}");
        return Ok(EXIT_VERIFICATION);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
    }
}
