use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fmcf_core::experiment::config::RunConfig;
use fmcf_core::experiment::{cmd_ensemble, cmd_simulate, cmd_sweep_eps, cmd_sweep_lambda, RunSummary};
use fmcf_core::validators::{fault, ValidatorSuite, DEFAULT_TRIALS};
use fmcf_core::Result;

#[derive(Parser)]
#[command(name = "fmcf", version, about = "Stochastic weighted graph flow experiments on the periodic torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides ensemble.base_seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides ensemble.workers)
    #[arg(long)]
    workers: Option<usize>,
    /// Per-key override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized identity checks
    Validate {
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Replace one formula by a known-wrong variant
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// One path: energy CSV and final field
    Simulate(RunArgs),
    /// Monte-Carlo ensemble with statistical verdicts
    Ensemble(RunArgs),
    /// Viscous-limit sweep over sweep.eps
    SweepEps(RunArgs),
    /// Small-noise sweep over sweep.lambda
    SweepLambda(RunArgs),
}

fn report(result: Result<RunSummary>) -> ExitCode {
    match result {
        Ok(summary) => {
            for line in summary.lines() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { trials, seed, inject_fault } => {
            let mut suite = ValidatorSuite::new(trials, seed);
            if let Some(name) = inject_fault {
                match fault(&name) {
                    Ok(f) => suite = suite.with_formulas(f),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            let report = suite.run();
            for check in &report.checks {
                println!("{check}");
            }
            if report.passed() {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!("failed: {}", report.failed_checks().join(", "));
                ExitCode::FAILURE
            }
        }
        Command::Simulate(args) => report(args.load().and_then(|cfg| cmd_simulate(&cfg))),
        Command::Ensemble(args) => report(args.load().and_then(|cfg| cmd_ensemble(&cfg))),
        Command::SweepEps(args) => report(args.load().and_then(|cfg| cmd_sweep_eps(&cfg))),
        Command::SweepLambda(args) => report(args.load().and_then(|cfg| cmd_sweep_lambda(&cfg))),
    }
}
