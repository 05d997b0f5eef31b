use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bolab::experiment::{run_experiment, Experiment, ExperimentConfig, RunSummary};
use clap::{Parser, Subcommand};

/// Soliton dynamics experiments for the Benjamin-Ono equation with a slowly
/// varying potential.
#[derive(Debug, Parser)]
#[command(name = "bolab", version)]
struct Cli {
    /// Flat `key = value` configuration file; defaults are used otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output root; each experiment writes into its own subdirectory.
    #[arg(long, global = true, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
    /// Worker threads for sweeps and probes (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Soliton equation residual, Hilbert identities and the integral table.
    Identities,
    /// Eigenvalues of the linearized operator and coercivity constants.
    Spectrum,
    /// Long pBO run: invariants, checkpoints, time reversal, linearized flow.
    Evolve,
    /// Reference versus exact modulation trajectories over h.
    Trajectories,
    /// Near-soliton pBO sweep over h with modulation tracking.
    TheoremSweep,
    /// Local virial ratios, weighted-mass monotonicity, commutator norms.
    Virial,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Identities => Experiment::Identities,
            Command::Spectrum => Experiment::Spectrum,
            Command::Evolve => Experiment::Evolve,
            Command::Trajectories => Experiment::Trajectories,
            Command::TheoremSweep => Experiment::TheoremSweep,
            Command::Virial => Experiment::Virial,
        }
    }
}

fn report(summary: &RunSummary, out: &std::path::Path) {
    for c in &summary.checks {
        let tag = if c.acceptance { "" } else { " (info)" };
        let measured = c.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
        println!("{} {}{tag}: {measured} [{}]", c.status(), c.name, c.expected);
    }
    let verdict = if summary.passed() { "all acceptance checks passed" } else { "some acceptance checks failed" };
    println!("{}: {verdict}; results in {}", summary.experiment, out.join(&summary.experiment).display());
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        anyhow::ensure!(k > 0, "--threads must be positive");
        pool = pool.num_threads(k);
    }
    let pool = pool.build().context("building the thread pool")?;
    let experiment = Experiment::from(cli.command);
    let summary = pool.install(|| run_experiment(experiment, &cfg, &cli.out))?;
    report(&summary, &cli.out);
    Ok(summary.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
