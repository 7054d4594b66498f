//! `patchdyn`: command-line front end for the patch dynamics laboratory.
//!
//! Every subcommand reads a TOML model description (`--config`) and fills an
//! output directory (`--out`) with CSV data, a resolved config snapshot that
//! reproduces the run, and a `manifest.toml` describing what happened.
//!
//! Exit codes: 0 success, 1 a cross-check or constraint failed tolerance,
//! 2 bad configuration or usage, 3 numerical abort (blow-up, stability),
//! 4 solver non-convergence.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Ctx;

#[derive(Parser)]
#[command(
    name = "patchdyn",
    version,
    about = "Trait-structured populations on migration-coupled patches: \
             PDE steady states, the concentration limit, and cross-checks"
)]
struct Cli {
    /// Model description (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the trait grid to steady state; write the pressure series
    /// and density profiles.
    Simulate {
        /// Comma-separated tau values at which to snapshot profiles.
        #[arg(long, value_name = "T1,T2,..")]
        checkpoints: Option<String>,
    },
    /// Solve the zero-mutation concentration limit from the patch fitness
    /// algebra; write the atoms and the constraint report.
    Asymptotic {
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
        /// Pressure bracket "lo,hi" for the symmetric root solve.
        #[arg(long, value_name = "LO,HI")]
        bracket: Option<String>,
        /// Starting pressures for the general solver, one per patch.
        #[arg(long, value_name = "I1,..,IK")]
        i0: Option<String>,
    },
    /// Run both routes and compare atom positions, masses, and pressures.
    Verify {
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
        /// Largest accepted atom position gap.
        #[arg(long, default_value_t = 0.02)]
        tol_pos: f64,
        /// Largest accepted atom mass gap.
        #[arg(long, default_value_t = 0.05)]
        tol_mass: f64,
        /// Largest accepted pressure gap.
        #[arg(long, default_value_t = 0.05)]
        tol_pressure: f64,
        /// Relative peak height below which a density bump is not an atom.
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
    },
    /// Re-solve the symmetric limit across migration strengths.
    Sweep {
        /// Comma-separated migration scales, each positive.
        #[arg(long, value_name = "V1,..,VN")]
        values: String,
        /// Thread count; defaults to PATCHDYN_WORKERS, then 1.
        #[arg(long)]
        workers: Option<usize>,
        /// Pressure bracket "lo,hi" shared by all solves.
        #[arg(long, value_name = "LO,HI")]
        bracket: Option<String>,
    },
}

/// Which limit solver to run. `auto` picks the symmetric root solve for
/// two-patch mirror models and the general pressure iteration otherwise.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Auto,
    Symmetric,
    General,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Some(config), Some(out)) = (cli.config, cli.out) else {
        eprintln!("error: --config and --out are required");
        return ExitCode::from(commands::EXIT_CONFIG);
    };
    let ctx = Ctx { config, out };
    let code = match cli.command {
        Cmd::Simulate { checkpoints } => commands::simulate(&ctx, checkpoints.as_deref()),
        Cmd::Asymptotic { mode, bracket, i0 } => {
            commands::asymptotic(&ctx, mode, bracket.as_deref(), i0.as_deref())
        }
        Cmd::Verify { mode, tol_pos, tol_mass, tol_pressure, threshold } => {
            commands::verify(&ctx, mode, tol_pos, tol_mass, tol_pressure, threshold)
        }
        Cmd::Sweep { values, workers, bracket } => {
            commands::sweep(&ctx, &values, workers, bracket.as_deref())
        }
    };
    ExitCode::from(code)
}
