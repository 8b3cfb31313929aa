//! Command-line front end: parse the TOML config, dispatch scenarios and
//! delay optimization, emit CSV results and a run manifest.

mod commands;
mod config;
mod manifest;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use commands::CommonOpts;
use config::{default_config, parse_config, parse_mode, ResolvedConfig};
use dpst_core::system::SimMode;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dpst-sim", version, about = "DPST link/system-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hexagonal downlink Monte-Carlo and write CDF CSV files
    Simulate(RunArgs),
    /// Search the per-antenna fractional delays minimizing the correlation metric
    OptimizeDelay(RunArgs),
    /// Print mean rank and condition number per channel mode
    ChannelStats(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (fallback: DPST_SIM_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Channel mode: correlated | rayleigh | dpst | optimum | all
    #[arg(long)]
    mode: Option<String>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn load(args: &RunArgs) -> anyhow::Result<ResolvedConfig> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => default_config(),
    };
    if let Some(seed) = args.seed {
        cfg.scenario.master_seed = seed;
        cfg.file.scenario.master_seed = seed;
    }
    Ok(cfg)
}

fn mode_selection(args: &RunArgs, cfg: &ResolvedConfig) -> anyhow::Result<Vec<SimMode>> {
    match args.mode.as_deref() {
        None => Ok(vec![cfg.scenario.mode]),
        Some("all") => Ok(SimMode::ALL.to_vec()),
        Some(other) => Ok(vec![parse_mode(other)?]),
    }
}

fn thread_count(args: &RunArgs) -> anyhow::Result<Option<usize>> {
    if let Some(n) = args.threads {
        return Ok(Some(n));
    }
    match std::env::var("DPST_SIM_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .with_context(|| format!("DPST_SIM_THREADS={v} is not a thread count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Simulate(a) | Command::OptimizeDelay(a) | Command::ChannelStats(a) => a,
    };
    let cfg = load(args)?;
    let threads = thread_count(args)?;
    let opts = CommonOpts {
        out_dir: args.out_dir.clone(),
        threads,
    };

    let body = || -> anyhow::Result<()> {
        match &cli.command {
            Command::Simulate(a) => {
                let modes = mode_selection(a, &cfg)?;
                commands::cmd_simulate(&cfg, &modes, &opts)
            }
            Command::OptimizeDelay(_) => commands::cmd_optimize_delay(&cfg, &opts),
            Command::ChannelStats(a) => {
                let modes = mode_selection(a, &cfg)?;
                commands::cmd_channel_stats(&cfg, &modes)
            }
        }
    };

    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot build thread pool")?
            .install(body),
        None => body(),
    }
}

fn main() {
    env_logger::init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
