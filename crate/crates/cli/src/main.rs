//! `kinrelax`: control checks, rate certificates, grid and particle runs,
//! decay fits and end-to-end reports from one JSON config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::EXIT_CONFIG;
use crate::config::RunConfig;
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "kinrelax", version, about = "Convergence to equilibrium for linear relaxation on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the weakest trajectory and report kappa_hat.
    Gcc(Flags),
    /// Build the rate certificate (runs the control search first).
    Cert(Flags),
    /// Grid solution with snapshots and a TV time series.
    Solve(Flags),
    /// Particle simulation.
    Mc(Flags),
    /// Log-linear decay fit of the grid TV curve.
    Fit(Flags),
    /// Certificate, solve and fit combined into one verdict.
    Report(Flags),
}

#[derive(clap::Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Thread count; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match &cli.command {
        Command::Gcc(f) => ("gcc", f),
        Command::Cert(f) => ("cert", f),
        Command::Solve(f) => ("solve", f),
        Command::Mc(f) => ("mc", f),
        Command::Fit(f) => ("fit", f),
        Command::Report(f) => ("report", f),
    };
    let mut cfg = match RunConfig::load(&flags.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(w) = flags.workers {
        cfg.workers = Some(w);
    }
    if cfg.workers == Some(0) {
        eprintln!("error: --workers must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut out = match OutDir::create(&flags.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", flags.out.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let run = || match &cli.command {
        Command::Gcc(_) => commands::gcc(&cfg, &mut out),
        Command::Cert(_) => commands::cert(&cfg, &mut out),
        Command::Solve(_) => commands::solve(&cfg, &mut out),
        Command::Mc(_) => commands::mc(&cfg, &mut out),
        Command::Fit(_) => commands::fit(&cfg, &mut out),
        Command::Report(_) => commands::report(&cfg, &mut out),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let result = match builder.build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{name}: error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
