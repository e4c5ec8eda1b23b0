use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rewire_core::harness::{self, check_manifest, CheckStatus, ExperimentConfig, RunManifest};
use rewire_core::Error;

/// Particle systems on fast-rewiring regular networks: simulation, fluid
/// limit and convergence diagnostics.
///
/// Exit status: 0 on success, 1 when a check fails, 2 on a configuration error.
#[derive(Parser, Debug)]
#[command(name = "rewire", version, about)]
struct Cli {
    /// Experiment config (TOML). Built-in defaults are used when absent.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config field, e.g. `--set graph.N=[100,400]`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output root. Falls back to the config's `output_dir`, then
    /// $REWIRE_OUTPUT_DIR, then ./rewire-out.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One trajectory CSV per (N, seed).
    Simulate {
        /// Also write each graph's edge list (1-based `u v` lines).
        #[arg(long)]
        dump_graph: bool,
    },
    /// Integrate the fluid ODE from the initial fractions.
    Fluid,
    /// Sup-distance between each run and the fluid solution, with medians by N.
    Compare,
    /// Gap-process and auxiliary-process tail estimates over the N grid.
    Sweep,
    /// Run the invariant suite.
    Verify,
    /// Monte Carlo of the Poisson-Bernoulli tail against its closed form.
    PoissonCheck,
    /// Gap process of each run.
    Gap,
    /// Martingale residuals and their second moments against the ceiling.
    Martingale,
}

enum Failure {
    Config(String),
    Check,
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides),
        None => ExperimentConfig::with_overrides(&cli.overrides),
    }
}

fn report(dir: &Path, manifest: &RunManifest) -> Result<(), Failure> {
    for c in &manifest.checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    let problems = check_manifest(dir, manifest);
    for p in &problems {
        eprintln!("manifest: {p}");
    }
    println!(
        "{}: {} runs, {} files in {}",
        manifest.command,
        manifest.runs.len(),
        manifest.files.len(),
        dir.display()
    );
    if !problems.is_empty() || !manifest.passed() {
        return Err(Failure::Check);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load(cli).map_err(|e| Failure::Config(e.to_string()))?;
    let root = config.resolve_output_dir(cli.out.as_deref());
    let (name, manifest) = match &cli.command {
        Command::Simulate { dump_graph } => ("simulate", harness::run_simulate(&config, &root, *dump_graph)?),
        Command::Fluid => ("fluid", harness::run_fluid(&config, &root)?),
        Command::Compare => {
            let (m, medians) = harness::run_compare(&config, &root)?;
            println!("N\truns\tmedian_sup_distance");
            for row in medians {
                println!("{}\t{}\t{:.6}", row.n, row.runs, row.median);
            }
            ("compare", m)
        }
        Command::Sweep => {
            let (m, summary) = harness::run_sweep(&config, &root)?;
            println!("sup-gap tail\nN\tepsilon\tp_hat\tci");
            for e in &summary.sup_gap {
                println!("{}\t{}\t{:.4}\t[{:.4}, {:.4}]", e.n, e.epsilon, e.p_hat, e.ci_low, e.ci_high);
            }
            println!("auxiliary tail\nN\tepsilon\tp_hat\tci\tbernstein");
            for (e, ceiling) in &summary.auxiliary {
                println!(
                    "{}\t{}\t{:.5}\t[{:.5}, {:.5}]\t{:.5}",
                    e.n, e.epsilon, e.p_hat, e.ci_low, e.ci_high, ceiling
                );
            }
            ("sweep", m)
        }
        Command::Verify => ("verify", harness::run_verify(&config, &root)?),
        Command::PoissonCheck => ("poisson-check", harness::run_poisson_check(&config, &root)?),
        Command::Gap => ("gap", harness::run_gap(&config, &root)?),
        Command::Martingale => ("martingale", harness::run_martingale(&config, &root)?.0),
    };
    report(&root.join(name), &manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
