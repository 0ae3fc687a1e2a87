//! `morse-action` command-line driver.

mod artifacts;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stages::{Failure, Settings};

type Stage = fn(&Settings) -> Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(
    name = "morse-action",
    version,
    about = "Morse complexes of Lagrangian action functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Number of cells of the path discretization.
    #[arg(long, global = true, value_name = "N")]
    mesh: Option<usize>,
    /// Sublevel bound `a` for the complex.
    #[arg(long, global = true, value_name = "a", allow_hyphen_values = true)]
    sublevel: Option<f64>,
    /// RNG seed for radius calibration and the perturbation knob.
    #[arg(long, global = true, value_name = "s")]
    seed: Option<u64>,
    /// Output directory for reports and artifacts.
    #[arg(long, global = true, value_name = "dir")]
    out: Option<PathBuf>,
    /// Run even if an earlier stage reported a failed condition.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the growth and convexity conditions and the boundary admissibility.
    Verify { problem: PathBuf },
    /// Find critical points from the problem's seeds.
    Find { problem: PathBuf },
    /// Morse index, nullity and spectral gap of each critical point.
    Index { problem: PathBuf },
    /// Assemble the pseudo-gradient field and integrate unstable branches.
    Flow { problem: PathBuf },
    /// Count connections and assemble the boundary matrices.
    Complex { problem: PathBuf },
    /// Integral homology of the complex and comparison with the reference.
    Homology { problem: PathBuf },
    /// Hessian continuity probe under concentrated velocity perturbations.
    #[command(name = "probe-c2")]
    ProbeC2 { problem: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (problem, run): (&PathBuf, Stage) = match &cli.command {
        Command::Verify { problem } => (problem, stages::verify),
        Command::Find { problem } => (problem, stages::find),
        Command::Index { problem } => (problem, stages::index),
        Command::Flow { problem } => (problem, stages::flow),
        Command::Complex { problem } => (problem, stages::complex),
        Command::Homology { problem } => (problem, stages::homology),
        Command::ProbeC2 { problem } => (problem, stages::probe),
    };
    let f = &cli.flags;
    let result = Settings::load(problem, f.mesh, f.sublevel, f.seed, f.out.clone(), f.force).and_then(|s| run(&s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
