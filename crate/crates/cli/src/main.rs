use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sdlab::config;
use sdlab::experiment::{run_experiment, RunOptions};

/// Runs one experiment described by a JSON config file.
#[derive(Parser)]
#[command(name = "sdlab", version)]
struct Args {
    /// Path to the experiment config.
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record full trajectories.
    #[arg(long)]
    trajectories: bool,
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("SDLAB_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("SDLAB_THREADS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                anyhow::bail!("SDLAB_THREADS must be a positive integer, got 0");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(args: Args) -> anyhow::Result<bool> {
    let mut cfg = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.trajectories {
        cfg.sampler.trajectories = true;
    }
    let opts = RunOptions {
        out: args.out,
        threads: threads_from_env()?,
    };
    let outcome = run_experiment(&cfg, &opts)?;
    println!("output: {}", outcome.out_dir.display());
    for a in &outcome.assertions {
        println!("{} {}: {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
