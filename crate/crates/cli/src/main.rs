use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmmqf_core::gradcheck::run_gradient_check;
use gmmqf_core::harness::{compare_k_sweep, default_workers, run_experiment, ExperimentResult};
use gmmqf_core::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gmmqf", version, about = "Policy iteration with Gaussian-mixture Q-functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of policy-iteration runs and write CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the number of available processors.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the same config for several K values and compare them.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,20,50,200,500")]
        k: Vec<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the loss gradient on random instances.
    ValidateGradients {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Random symmetric directions per covariance.
        #[arg(long, default_value_t = 5)]
        directions: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn write(result: &ExperimentResult, dir: &std::path::Path) -> Result<(), Error> {
    for path in result.write_outputs(dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, workers, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out.to_string_lossy().into_owned();
            }
            let result = run_experiment(&cfg, workers.unwrap_or_else(default_workers))?;
            write(&result, cfg.output_dir.as_ref())?;
            if let Some(last) = result.aggregate().last() {
                println!(
                    "iteration {}: mean total loss {:.6}, median {:.6}",
                    last.iteration, last.mean_total_loss, last.median_total_loss
                );
            }
        }
        Command::SweepK { config, mut k, workers, out } => {
            let base = ExperimentConfig::from_file(&config)?;
            if k.is_empty() {
                return Err(Error::Config("--k needs at least one value".into()));
            }
            k.sort_unstable();
            let root = out.unwrap_or_else(|| PathBuf::from(&base.output_dir));
            let workers = workers.unwrap_or_else(default_workers);
            let mut results = Vec::with_capacity(k.len());
            for &components in &k {
                let mut cfg = base.clone();
                cfg.components = components;
                let dir = root.join(format!("k{components}"));
                cfg.output_dir = dir.to_string_lossy().into_owned();
                cfg.validate()?;
                let result = run_experiment(&cfg, workers)?;
                write(&result, &dir)?;
                results.push(result);
            }
            let report = compare_k_sweep(&results)?;
            let text = report.to_text();
            std::fs::write(root.join("sweep_report.txt"), &text)?;
            print!("{text}");
        }
        Command::ValidateGradients { seed, instances, directions } => {
            let r = run_gradient_check(seed, instances, directions)?;
            println!("instances: {}", r.instances);
            println!("max relative error, weights: {:.3e}", r.max_rel_weights);
            println!("max relative error, means: {:.3e}", r.max_rel_means);
            println!("max relative error, covariances: {:.3e}", r.max_rel_covs);
            if !r.passed() {
                return Err(Error::Numerical("gradient check exceeded tolerance".into()));
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
