//! nehari-forge: ground states, least-energy nodal solutions and their
//! p → 2 limits for −Δu + Vu = λ|u|^{p−2}u on plane domains.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;

#[derive(Parser)]
#[command(name = "nehari-forge", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Directory the artifacts are written into (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the grid resolution (intervals per unit length).
    #[arg(long, value_name = "N")]
    resolution: Option<u32>,
    /// Suppress progress and summary output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute eigenvalue clusters of −Δ + V.
    Eigs(Common),
    /// Compute the ground state and/or least-energy nodal solution.
    Solve(Common),
    /// Follow a solution branch through decreasing exponents towards p = 2.
    Continuation(Common),
    /// Classify a stored field against the symmetries preserving V.
    Symmetry(Common),
    /// Re-run the five reference experiments and tabulate deviations.
    Reproduce(Common),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, f): (&Common, fn(&config::Plan, &std::path::Path, bool) -> anyhow::Result<()>) =
        match &cli.command {
            Command::Eigs(c) => (c, commands::run_eigs),
            Command::Solve(c) => (c, commands::run_solve),
            Command::Continuation(c) => (c, commands::run_continuation),
            Command::Symmetry(c) => (c, commands::run_symmetry),
            Command::Reproduce(c) => {
                return commands::run_reproduce_from_file(&c.config, c.resolution, &c.out, c.quiet)
            }
        };
    let plan = config::load(&common.config, common.resolution)?;
    f(&plan, &common.out, common.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
