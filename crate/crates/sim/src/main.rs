use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use hopper_core::RunOptions;
use hopper_sim::config::{default_config_text, load_config};
use hopper_sim::experiment::{run_experiment, summarize};
use hopper_sim::output::write_experiment;

/// Run a scenario file and write runs.csv, summary.csv and links.csv.
#[derive(Debug, Parser)]
#[command(name = "hopper", version)]
struct Cli {
    /// Scenario file (`key = value` lines).
    #[arg(long, required_unless_present = "list_defaults")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write the engine event trace of every replication.
    #[arg(long)]
    trace: bool,
    /// Write the protocol message log of every replication.
    #[arg(long)]
    dump_messages: bool,
    /// Print every configuration key with its default and exit.
    #[arg(long)]
    list_defaults: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.list_defaults {
        print!("{}", default_config_text());
        return Ok(());
    }
    let Some(path) = cli.config else {
        bail!("--config is required");
    };
    let config = load_config(&path).with_context(|| format!("invalid scenario {}", path.display()))?;
    let options = RunOptions {
        trace: cli.trace,
        dump_messages: cli.dump_messages,
    };
    let started = Instant::now();
    let result = run_experiment(&config, options)?;
    let summaries = summarize(&result);
    let files = write_experiment(&cli.out, &result, &summaries)?;
    eprintln!(
        "{} grid points x {} replications in {:.1} s",
        result.points.len(),
        config.n_replications,
        started.elapsed().as_secs_f64()
    );
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}
