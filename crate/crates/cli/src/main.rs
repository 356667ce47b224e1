//! `statfield`: run density/phase scenarios, momentum spectra, symbolic checks and max-entropy solves.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use commands::{cmd_evolve, cmd_maxent, cmd_spectrum, cmd_verify_symbolic, load_batch, Failure};
use config::ScenarioConfig;

#[derive(Parser)]
#[command(name = "statfield", version, about = "Density/phase field scenarios from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial state and write trajectory.csv and summary.json.
    Evolve(RunArgs),
    /// Quantum and hybrid momentum densities of the initial (or an evolved) state.
    Spectrum(RunArgs),
    /// Exact checks of the variational PDE, its solution family and the recursion nullspace.
    VerifySymbolic(VerifyArgs),
    /// Canonical distribution for a target mean energy, with an extremum check.
    Maxent(RunArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TOML file with `configs = [..]`; scenarios run in parallel.
    #[arg(long)]
    batch: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (overrides `output.dir`; with --batch, one subdirectory per config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = -6, allow_hyphen_values = true)]
    window_lo: i32,
    #[arg(long, default_value_t = 6, allow_hyphen_values = true)]
    window_hi: i32,
    /// Also write report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

type Runner = fn(&ScenarioConfig, &Path) -> Result<String, Failure>;

fn resolve(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let dir = cfg.output.dir.clone();
    Ok((cfg, dir))
}

fn run_one(run: Runner, path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<String, Failure> {
    let (cfg, dir) = resolve(path, out, seed)?;
    run(&cfg, &dir)
}

fn report(label: &str, result: &Result<String, Failure>) -> i32 {
    match result {
        Ok(msg) => {
            println!("{label}{msg}");
            0
        }
        Err(e) => {
            eprintln!("{label}{e}");
            e.exit_code()
        }
    }
}

fn dispatch(run: Runner, args: RunArgs) -> i32 {
    if let Some(path) = args.source.config {
        return report("", &run_one(run, &path, args.out, args.seed));
    }
    let batch = args.source.batch.expect("clap enforces one source");
    let paths = match load_batch(&batch) {
        Ok(p) => p,
        Err(e) => return report("", &Err(e)),
    };
    let results: Vec<Result<String, Failure>> = paths
        .par_iter()
        .map(|p| {
            let out = args.out.as_ref().map(|o| o.join(p.file_stem().unwrap_or_default()));
            run_one(run, p, out, args.seed)
        })
        .collect();
    paths.iter().zip(&results).map(|(p, r)| report(&format!("{}: ", p.display()), r)).max().unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Evolve(a) => dispatch(cmd_evolve, a),
        Command::Spectrum(a) => dispatch(cmd_spectrum, a),
        Command::Maxent(a) => dispatch(cmd_maxent, a),
        Command::VerifySymbolic(a) => report("", &cmd_verify_symbolic(a.window_lo, a.window_hi, a.out.as_deref())),
    };
    ExitCode::from(code as u8)
}
