//! Command-line runner for the bidomain experiments. Every subcommand reads a
//! scenario config, writes CSV/JSON artifacts into `--out` and exits 0 iff
//! all of its checks pass (1 on a failed check, 2 on an error).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, CliResult, Context};
use config::ScenarioConfig;

/// Shipped default scenario, used when `--config` is absent.
const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Parser)]
#[command(name = "bidomain", version, about = "Bidomain transmission experiments on a disk-in-disk geometry")]
struct Cli {
    /// Scenario file (TOML); the shipped default when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for the artifacts; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the mesh and export it.
    Mesh,
    /// Compatibility gate and a manufactured Neumann solution.
    NeumannDemo,
    /// Regularization sweep of the Cauchy inverse problem.
    CauchySweep,
    /// Null-space triple generated by a bump, with residuals and calibration.
    NullspaceDemo,
    /// Evaluate the existence condition of the transmission problem.
    ExistenceCheck,
    /// Fourth-order supplemented solve against the disk oracle.
    SupplementSolve,
    /// Assemble and solve the cardiac fourth-order operator.
    CardioOperator,
    /// Null-space triple of the elastic composite.
    ElasticityDemo,
    /// Cable evolution, uniqueness probe and heat Green formula.
    ParabolicDemo,
    /// Run the acceptance criteria and write the report.
    Verify {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
    },
}

fn run(cli: &Cli) -> CliResult<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::parse(DEFAULT_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|source| CliError::Write { path: cli.out.display().to_string(), source })?;
    let ctx = Context { cfg, out: cli.out.clone() };
    let checks = match &cli.command {
        Command::Mesh => commands::mesh(&ctx)?,
        Command::NeumannDemo => commands::neumann_demo(&ctx)?,
        Command::CauchySweep => commands::cauchy_sweep(&ctx)?,
        Command::NullspaceDemo => commands::nullspace_demo(&ctx)?,
        Command::ExistenceCheck => commands::existence_check(&ctx)?,
        Command::SupplementSolve => commands::supplement_solve(&ctx)?,
        Command::CardioOperator => commands::cardio_operator(&ctx)?,
        Command::ElasticityDemo => commands::elasticity_demo(&ctx)?,
        Command::ParabolicDemo => commands::parabolic_demo(&ctx)?,
        Command::Verify { criteria } => commands::verify(&ctx, criteria)?,
    };
    let mut all = true;
    for c in &checks {
        println!("check {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name);
        all &= c.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
