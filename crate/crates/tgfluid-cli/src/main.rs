//! `tgfluid`: batch experiments for the stochastic third-grade fluid.
//!
//! Exit status is 0 when the experiment ran and its checks passed, 2 when it
//! ran but a checked property failed, and 1 on any configuration or runtime
//! error.

mod config;
mod experiments;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use tgfluid::par::ExecMode;

use crate::config::{ExperimentConfig, Kind};
use crate::experiments::{Outcome, Setup};

#[derive(Parser)]
#[command(name = "tgfluid", version, about = "Stochastic third-grade fluid experiments in a 2D channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward run with trajectory, energy ledger and checkpoint.
    Simulate(Common),
    /// Randomized checks of operator identities, projection, noise and solver.
    Properties(Common),
    /// Pullback clouds and the absorbing-ball check.
    Pullback(Common),
    /// Tail masses of pullback clouds and the drift of k0(eps).
    Tails(Common),
    /// Time averages under the invariant measure and the Markov probe.
    InvariantMeasure(Common),
    /// Empirical operator constants, written to constants.json.
    Calibrate(Common),
    /// Moments, autocorrelation and transition law of the noise modes.
    OuDiagnostics(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config (JSON when the file ends in .json); defaults apply to
    /// every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace noise.seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(long)]
    threads: Option<usize>,
    /// Run ensembles on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Command {
    fn split(self) -> (Kind, Common) {
        match self {
            Command::Simulate(c) => (Kind::Simulate, c),
            Command::Properties(c) => (Kind::Properties, c),
            Command::Pullback(c) => (Kind::Pullback, c),
            Command::Tails(c) => (Kind::Tails, c),
            Command::InvariantMeasure(c) => (Kind::InvariantMeasure, c),
            Command::Calibrate(c) => (Kind::Calibrate, c),
            Command::OuDiagnostics(c) => (Kind::OuDiagnostics, c),
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<usize> {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            if n == 0 {
                bail!("--threads must be positive");
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads.is_some_and(|n| n > 1) {
            eprintln!("note: built without the parallel feature; running on one thread");
        }
        Ok(1)
    }
}

fn run(kind: Kind, common: Common) -> Result<bool> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            bail!("config is for `{k}` but the `{kind}` subcommand was run");
        }
    }
    cfg.kind = Some(kind);
    if let Some(seed) = common.seed_override {
        cfg.noise.seed = seed;
    }
    cfg.validate()?;
    let threads = configure_threads(common.threads)?;
    let mode = if common.sequential { ExecMode::Sequential } else { ExecMode::Auto };

    let start = Instant::now();
    let setup = Setup::new(cfg, common.out, mode)?;
    let Outcome { passed, results, lines } = match kind {
        Kind::Simulate => experiments::simulate(&setup)?,
        Kind::Properties => experiments::properties(&setup)?,
        Kind::Pullback => experiments::pullback(&setup)?,
        Kind::Tails => experiments::tails(&setup)?,
        Kind::InvariantMeasure => experiments::invariant_measure(&setup)?,
        Kind::Calibrate => experiments::calibrate_constants(&setup)?,
        Kind::OuDiagnostics => experiments::ou_diagnostics_run(&setup)?,
    };
    report::write(&setup.out, kind, &setup.cfg, passed, &results)?;
    report::write_timing(&setup.out, kind, start.elapsed().as_secs_f64(), threads)?;

    // A closed pipe on stdout must not turn a finished run into an error.
    let mut stdout = std::io::stdout().lock();
    for line in lines {
        let _ = writeln!(stdout, "{line}");
    }
    let _ = writeln!(
        stdout,
        "{kind}: {} (report in {})",
        if passed { "PASS" } else { "FAIL" },
        setup.out.join("report.json").display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let (kind, common) = Cli::parse().command.split();
    match run(kind, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
