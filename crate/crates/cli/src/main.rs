use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volcon_cli::{
    run_backward, run_chains, run_profile, run_rates, run_report, CliError, CliResult, Experiment, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "volcon", version, about = "Backward volume-contraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `out_dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed, overriding the configured one
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Hitting-time tails and regime classification
    Profile,
    /// Backward rate derivation
    Rates,
    /// Pre-image trees and backward bounds
    Backward,
    /// Concatenation, chains and tower mass
    Chains,
    /// Aggregate report
    Report,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let exp = Experiment::new(ExperimentConfig::load(&path)?, cli.out, cli.seed)?;
    match cli.command {
        Command::Profile => {
            let r = run_profile(&exp)?;
            println!("regime {} (fit quality {:.4})", r.regime, r.fit_quality);
            if let Some(w) = r.warning {
                eprintln!("warning: {w}");
            }
        }
        Command::Rates => {
            let r = run_rates(&exp)?;
            println!("b = {:?}, n0 = {:?}, theorem series {:?}", r.b.family, r.n0, r.theorem_series.verdict);
        }
        Command::Backward => {
            let r = run_backward(&exp)?;
            println!(
                "{} of {} roots completed, pass fraction {:.3}, censored node fraction {:.3e}",
                r.completed, r.roots, r.fraction_pass, r.censored_fraction
            );
        }
        Command::Chains => {
            let r = run_chains(&exp)?;
            println!(
                "{} concatenation violations, tower verdict {:?}",
                r.violation_count, r.tower.series.verdict
            );
        }
        Command::Report => {
            let r = run_report(&exp)?;
            for c in &r.criteria {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
