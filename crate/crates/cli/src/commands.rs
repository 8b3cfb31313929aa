//! Subcommand implementations: simulate, optimize-delay, channel-stats.

use crate::config::{ResolvedConfig, ResolvedDelays};
use crate::manifest::{write_manifest, RunManifest};
use anyhow::Context;
use dpst_core::channel::{assemble_channel, ChannelMode, ChannelParams};
use dpst_core::numerics::ComplexMatrix;
use dpst_core::optimizer::{optimize_delays, DelaySearchResult};
use dpst_core::system::{
    optimizer_ensemble_seed, run_scenario, CdfSeries, ScenarioConfig, SimMode,
};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct CommonOpts {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

fn metric_file_stem(metric: &str) -> &'static str {
    match metric {
        "effective_sinr_db" => "sinr_cdf",
        "throughput_bps" => "throughput_cdf",
        "condition_number" => "condnum_cdf",
        other => panic!("unknown metric name {other}"),
    }
}

fn write_cdf_csv(path: &Path, series: &CdfSeries) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "value,cumulative_probability")?;
    let n = series.len();
    for (i, v) in series.values().iter().enumerate() {
        writeln!(w, "{},{}", v, (i + 1) as f64 / n as f64)?;
    }
    w.flush()?;
    Ok(())
}

/// Correlated reference ensemble at the configured statistics distance,
/// keyed off the master seed.
fn reference_channel_source(
    scenario: &ScenarioConfig,
) -> impl Fn(u64) -> ComplexMatrix + Sync + '_ {
    let params = ChannelParams {
        n_tx: scenario.mimo,
        n_rx: scenario.mimo,
        distance_m: scenario.stats_distance_m,
        tx_spacing_wl: scenario.tx_spacing_wl,
        rx_spacing_wl: scenario.rx_spacing_wl,
        mode: ChannelMode::Correlated,
    };
    let master = scenario.master_seed;
    move |i| {
        assemble_channel(&params, optimizer_ensemble_seed(master, i))
            .expect("reference ensemble draw")
            .h
    }
}

/// The delays a DPST run should use: explicit from config, or optimizer
/// output on the correlated reference ensemble.
pub fn resolve_dpst_delays(
    cfg: &ResolvedConfig,
) -> anyhow::Result<(Vec<f64>, Option<DelaySearchResult>)> {
    match &cfg.delays {
        ResolvedDelays::Explicit(list) => Ok((list.clone(), None)),
        ResolvedDelays::Optimize => {
            let source = reference_channel_source(&cfg.scenario);
            let result = optimize_delays(
                source,
                cfg.scenario.mimo,
                &cfg.search,
                &cfg.scenario.shaping,
            )
            .context("delay optimization failed")?;
            Ok((result.delays.clone(), Some(result)))
        }
    }
}

pub fn cmd_simulate(
    cfg: &ResolvedConfig,
    modes: &[SimMode],
    opts: &CommonOpts,
) -> anyhow::Result<()> {
    let t0 = Instant::now();
    std::fs::create_dir_all(&opts.out_dir)?;
    let suffixed = modes.len() > 1;
    let mut manifest = RunManifest::new("simulate", cfg.scenario.master_seed, cfg.file.clone());
    manifest.threads = opts.threads;
    manifest.delay_unit_note = cfg.delay_unit_note.clone();

    let mut resolved: Option<Vec<f64>> = None;
    for &mode in modes {
        let mut scenario = cfg.scenario.clone();
        scenario.mode = mode;
        if mode == SimMode::Dpst {
            let delays = match &resolved {
                Some(d) => d.clone(),
                None => {
                    let (d, _) = resolve_dpst_delays(cfg)?;
                    log::info!("DPST delays (fractions of T_s): {d:?}");
                    resolved = Some(d.clone());
                    d
                }
            };
            scenario.shaping.delays = delays;
        }
        let cdfs = run_scenario(&scenario)?;
        for (metric, series) in &cdfs {
            let stem = metric_file_stem(metric);
            let name = if suffixed {
                format!("{stem}_{}.csv", mode.label())
            } else {
                format!("{stem}.csv")
            };
            let path = opts.out_dir.join(&name);
            write_cdf_csv(&path, series)?;
            manifest.outputs.push(name);
        }
        let sinr = &cdfs["effective_sinr_db"];
        let tput = &cdfs["throughput_bps"];
        println!(
            "{:<11} median effective SINR {:8.2} dB   median throughput {:10.3} Mbit/s",
            mode.label(),
            sinr.median(),
            tput.median() / 1e6
        );
    }

    manifest.resolved_delays = resolved;
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    let path = write_manifest(&opts.out_dir, &manifest)?;
    manifest.outputs.push(path.file_name().unwrap().to_string_lossy().into_owned());
    println!("wrote {} file(s) to {}", manifest.outputs.len(), opts.out_dir.display());
    Ok(())
}

pub fn cmd_optimize_delay(cfg: &ResolvedConfig, opts: &CommonOpts) -> anyhow::Result<()> {
    let t0 = Instant::now();
    std::fs::create_dir_all(&opts.out_dir)?;
    let source = reference_channel_source(&cfg.scenario);
    let result = optimize_delays(
        source,
        cfg.scenario.mimo,
        &cfg.search,
        &cfg.scenario.shaping,
    )?;

    println!("optimal delays (fractions of T_s): {:?}", result.delays);
    println!("objective value: {}", result.objective_value);
    println!(
        "singular values of averaged virtual channel within [1-eps, 1+eps]: {}",
        result.sv_within_epsilon
    );

    let trace_path = opts.out_dir.join("delay_trace.csv");
    let file = std::fs::File::create(&trace_path)?;
    let mut w = std::io::BufWriter::new(file);
    let free = cfg.scenario.mimo - 1;
    let header: Vec<String> = (0..free).map(|i| format!("delay_{}", i + 2)).collect();
    writeln!(w, "{},metric", header.join(","))?;
    for (delays, value) in &result.metric_trace {
        let cols: Vec<String> = delays.iter().map(|d| d.to_string()).collect();
        writeln!(w, "{},{}", cols.join(","), value)?;
    }
    w.flush()?;

    let mut manifest = RunManifest::new("optimize-delay", cfg.scenario.master_seed, cfg.file.clone());
    manifest.threads = opts.threads;
    manifest.delay_unit_note = cfg.delay_unit_note.clone();
    manifest.resolved_delays = Some(result.delays.clone());
    manifest.outputs.push("delay_trace.csv".to_string());
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(&opts.out_dir, &manifest)?;
    Ok(())
}

pub fn cmd_channel_stats(cfg: &ResolvedConfig, modes: &[SimMode]) -> anyhow::Result<()> {
    let n = cfg.scenario.n_drops;
    println!(
        "{:<24} {:>12} {:>26}",
        "Channel Status", "Channel Rank", "Channel Condition Number"
    );
    for &mode in modes {
        let mut scenario = cfg.scenario.clone();
        scenario.mode = mode;
        if mode == SimMode::Dpst {
            let (delays, _) = resolve_dpst_delays(cfg)?;
            scenario.shaping.delays = delays;
        }
        let stats = dpst_core::system::channel_statistics(&scenario, mode, n)?;
        let label = format!("{}x{} {}", scenario.mimo, scenario.mimo, mode.label());
        println!(
            "{:<24} {:>12.2} {:>26.4}",
            label, stats.mean_rank, stats.mean_condition
        );
    }
    Ok(())
}
