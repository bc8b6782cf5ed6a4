use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sievelab::experiment::{parse_config, run_scenario, Scenario, ScenarioReport};
use sievelab::{Error, Result};

#[derive(Parser)]
#[command(name = "sievelab", version, about = "Monte Carlo laboratory for the Bernoulli sieve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// overrides `master_seed`
        #[arg(long)]
        seed: Option<u64>,
        /// overrides `workers` and SIEVELAB_WORKERS
        #[arg(long)]
        workers: Option<usize>,
        /// output directory; defaults to `output` from the config, then `sievelab-out/<scenario>`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available scenarios.
    Scenarios,
}

fn run(config: PathBuf, seed: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) -> Result<ScenarioReport> {
    let text = std::fs::read_to_string(&config).map_err(|source| Error::Io { path: config, source })?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if workers.is_some() {
        config.workers = workers;
    }
    let dir = out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("sievelab-out").join(config.scenario.name()));
    let report = run_scenario(&config)?;
    report.write_all(&dir)?;
    for t in &report.tests {
        let verdict = match (t.gating, t.pass) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "ok",
            (false, false) => "info",
        };
        let p = t.p_value.map_or(String::new(), |p| format!(" p={p:.3e}"));
        println!("{verdict:>4}  {:<32} {:.6}{p}", t.test, t.statistic);
    }
    println!(
        "{}: {} checks, wrote {} in {:.1}s with {} workers",
        report.config.scenario,
        report.tests.len(),
        dir.display(),
        report.run.wall_clock_seconds,
        report.run.workers
    );
    Ok(report)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Scenarios => {
            for s in Scenario::ALL {
                println!("{:<18} {}", s.name(), s.description());
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => match run(config, seed, workers, out) {
            Ok(report) if report.passed() => ExitCode::SUCCESS,
            Ok(report) => {
                for t in report.failures() {
                    eprintln!("failed: {} ({})", t.test, t.note);
                }
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
