//! Batch driver: one subcommand per experiment, delegating to the library.
//! Exit codes: 0 success, 1 validation failure, 2 invariant breach or total
//! sweep failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use shearflow::experiment::{self, ExperimentKind, Manifest};
use shearflow::Error;

#[derive(Parser)]
#[command(
    name = "shearflow",
    about = "Channel shear-flow stability experiments: resolvent audits, \
             dissipation-rate fits, slab decompositions, and nonlinear \
             threshold sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (key = value lines); defaults used if omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker pool size for sweep points.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Random seed (ChaCha8), overriding the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Orr-Sommerfeld resolvent estimate audit over a lambda sweep.
    #[command(name = "resolvent_audit")]
    ResolventAudit(Common),
    /// Lambda-integral identity of the boundary-layer weight rho_k.
    #[command(name = "rho_identity")]
    RhoIdentity(Common),
    /// Enhanced-dissipation decay-rate fits of unforced linear evolutions.
    #[command(name = "decay_rates")]
    DecayRates(Common),
    /// Frozen-time slab decomposition of the temperature equation.
    #[command(name = "slab_decomposition")]
    SlabDecomposition(Common),
    /// Nonlinear transition-threshold amplitude sweep.
    #[command(name = "threshold")]
    Threshold(Common),
    /// Auxiliary inequality checks (sinh-window norms, weighted gradient
    /// bound, heat-flow Lipschitz bound).
    #[command(name = "appendix_lemmas")]
    AppendixLemmas(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::ResolventAudit(c) => (ExperimentKind::ResolventAudit, c),
        Command::RhoIdentity(c) => (ExperimentKind::RhoIdentity, c),
        Command::DecayRates(c) => (ExperimentKind::DecayRates, c),
        Command::SlabDecomposition(c) => (ExperimentKind::SlabDecomposition, c),
        Command::Threshold(c) => (ExperimentKind::Threshold, c),
        Command::AppendixLemmas(c) => (ExperimentKind::AppendixLemmas, c),
    };
    match execute(kind, common) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Validation(_) | Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn execute(kind: ExperimentKind, common: &Common) -> shearflow::Result<ExitCode> {
    let mut manifest = match &common.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Manifest::parse(&text, Some(kind))?
        }
        None => Manifest::defaults(kind),
    };
    if let Some(seed) = common.seed {
        manifest.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| manifest.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", kind.name())));
    let report = experiment::run(&manifest, &out, common.workers)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for failure in &report.failures {
        eprintln!("sweep point failed: {failure}");
    }
    println!(
        "{}: {}/{} points succeeded",
        kind.name(),
        report.total_points - report.failed_points,
        report.total_points
    );
    if report.total_points > 0 && report.failed_points == report.total_points {
        eprintln!("error: every sweep point failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
