//! Seven-cell hexagonal downlink Monte-Carlo: path loss, shadowing,
//! interference covariance, per-drop SINR/throughput, and CDF assembly.
//!
//! Every random quantity is drawn from its own counter-derived stream keyed
//! by (master seed, drop index, lane), so drops are reproducible bit for
//! bit regardless of how they are scheduled across threads.

use crate::channel::{ChannelError, ChannelGenerator, ChannelMode, ChannelParams};
use crate::numerics::{condition_number, svd, ComplexMatrix, NumericsError, C64, RANK_TOL};
use crate::shaping::{ShapingConfig, ShapingError, ShapingOperators};
use crate::transceiver::{throughput_capped, LinkState, TransceiverError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Serving-cell transmission scheme under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SimMode {
    Correlated,
    Rayleigh,
    Dpst,
    Optimum,
}

impl SimMode {
    pub const ALL: [SimMode; 4] = [
        SimMode::Correlated,
        SimMode::Rayleigh,
        SimMode::Dpst,
        SimMode::Optimum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SimMode::Correlated => "correlated",
            SimMode::Rayleigh => "rayleigh",
            SimMode::Dpst => "dpst",
            SimMode::Optimum => "optimum",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub isd_m: f64,
    /// Square deployment area side (context only; UEs drop in the central
    /// hexagon).
    pub area_m: f64,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub bs_power_dbm: f64,
    pub noise_figure_db: f64,
    pub shadowing_sigma_los_db: f64,
    pub shadowing_sigma_nlos_db: f64,
    pub n_drops: usize,
    pub master_seed: u64,
    pub mimo: usize,
    pub mode: SimMode,
    pub tx_spacing_wl: f64,
    pub rx_spacing_wl: f64,
    pub shaping: ShapingConfig,
    /// Optional per-stream spectral-efficiency clamp for the throughput map.
    pub se_cap_bps_hz: Option<f64>,
    /// Reference distance for fixed-K channel-statistics ensembles.
    pub stats_distance_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            isd_m: 50.0,
            area_m: 500.0,
            carrier_ghz: 2.0,
            bandwidth_hz: 1e7,
            bs_power_dbm: 24.0,
            noise_figure_db: 9.0,
            shadowing_sigma_los_db: 3.0,
            shadowing_sigma_nlos_db: 4.0,
            n_drops: 10_000,
            master_seed: 1,
            mimo: 2,
            mode: SimMode::Correlated,
            tx_spacing_wl: 0.5,
            rx_spacing_wl: 0.5,
            shaping: ShapingConfig::default(),
            se_cap_bps_hz: None,
            stats_distance_m: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn bs_power_mw(&self) -> f64 {
        10f64.powf(self.bs_power_dbm / 10.0)
    }

    /// Thermal noise power per receive branch in mW (kTB plus noise figure).
    pub fn noise_power_mw(&self) -> f64 {
        10f64.powf((-174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db) / 10.0)
    }
}

#[derive(Debug, Clone)]
pub struct DropResult {
    pub ue_position: (f64, f64),
    pub serving_sinr_db: Vec<f64>,
    pub throughput_bps: f64,
    pub condition_number: f64,
    pub effective_sinr_db: f64,
}

/// Sorted empirical distribution with interpolated percentile queries.
#[derive(Debug, Clone)]
pub struct CdfSeries {
    metric_name: String,
    sorted_values: Vec<f64>,
}

impl CdfSeries {
    pub fn from_values(metric_name: &str, mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("CDF values must be orderable"));
        Self {
            metric_name: metric_name.to_string(),
            sorted_values: values,
        }
    }

    pub fn name(&self) -> &str {
        &self.metric_name
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn len(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_values.is_empty()
    }

    /// Linear-interpolated percentile, p in [0, 100].
    pub fn percentile(&self, p: f64) -> f64 {
        assert!((0.0..=100.0).contains(&p), "percentile must be in [0, 100]");
        assert!(!self.sorted_values.is_empty());
        let n = self.sorted_values.len();
        if n == 1 {
            return self.sorted_values[0];
        }
        let pos = p / 100.0 * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.sorted_values[lo] * (1.0 - frac) + self.sorted_values[hi] * frac
    }

    pub fn median(&self) -> f64 {
        self.percentile(50.0)
    }
}

/// Central site at the origin plus six interferers at distance `isd_m`.
pub fn hex_layout(isd_m: f64) -> Vec<(f64, f64)> {
    assert!(isd_m > 0.0, "inter-site distance must be positive");
    let mut sites = vec![(0.0, 0.0)];
    for i in 0..6 {
        let a = std::f64::consts::PI / 3.0 * i as f64;
        sites.push((isd_m * a.cos(), isd_m * a.sin()));
    }
    sites
}

/// Urban-micro LOS probability: min(18/d, 1)(1 - exp(-d/36)) + exp(-d/36).
pub fn los_probability(d_m: f64) -> f64 {
    assert!(d_m > 0.0);
    (18.0 / d_m).min(1.0) * (1.0 - (-d_m / 36.0).exp()) + (-d_m / 36.0).exp()
}

/// Urban-micro path loss in dB. Distances below 1 m are clamped to 1 m.
pub fn pathloss_db(d_m: f64, los: bool, carrier_ghz: f64) -> f64 {
    let d = if d_m < 1.0 {
        log::warn!("path-loss distance {d_m:.3} m below model range, clamped to 1 m");
        1.0
    } else {
        d_m
    };
    if los {
        22.0 * d.log10() + 28.0 + 20.0 * carrier_ghz.log10()
    } else {
        36.7 * d.log10() + 22.7 + 26.0 * carrier_ghz.log10()
    }
}

// Stream lanes for per-drop randomness.
const LANE_UE_POSITION: u64 = 1;
const LANE_LINK: u64 = 2;
const LANE_SERVING: u64 = 3;
const LANE_INTERFERER: u64 = 4;
const LANE_PRECODER: u64 = 5;
const LANE_STATS: u64 = 6;
pub(crate) const LANE_OPTIMIZER: u64 = 7;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from (master, drop, lane, index).
pub fn stream_seed(master_seed: u64, drop_index: u64, lane: u64, index: u64) -> u64 {
    let a = splitmix(master_seed ^ splitmix(drop_index));
    let b = splitmix(a ^ splitmix(lane.wrapping_mul(0xa076_1d64_78bd_642f)));
    splitmix(b ^ splitmix(index.wrapping_mul(0xe703_7ed1_a0b4_28db)))
}

fn stream_rng(master_seed: u64, drop_index: u64, lane: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master_seed, drop_index, lane, index))
}

/// Uniform point in the central Voronoi hexagon (apothem isd/2).
fn sample_hexagon(isd_m: f64, rng: &mut impl Rng) -> (f64, f64) {
    let r_max = isd_m / 3f64.sqrt();
    let apothem = isd_m / 2.0;
    loop {
        let x = rng.random::<f64>() * 2.0 * r_max - r_max;
        let y = rng.random::<f64>() * 2.0 * r_max - r_max;
        let inside = (0..6).all(|i| {
            let a = std::f64::consts::PI / 3.0 * i as f64;
            x * a.cos() + y * a.sin() <= apothem
        });
        if inside {
            return (x, y);
        }
    }
}

/// Random semi-unitary precoder (n x l, columns orthonormal) via
/// Gram-Schmidt on Gaussian columns.
fn random_semi_unitary(n: usize, l: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(l);
    while cols.len() < l {
        let mut v: Vec<C64> = (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            })
            .collect();
        for c in &cols {
            let proj: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= ci * proj;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue; // essentially impossible; redraw
        }
        for vi in &mut v {
            *vi /= C64::new(norm, 0.0);
        }
        cols.push(v);
    }
    ComplexMatrix::from_fn(n, l, |i, j| cols[j][i])
}

struct LinkBudget {
    distance_m: f64,
    gain_linear: f64,
}

fn draw_link_budget(
    scenario: &ScenarioConfig,
    drop_index: u64,
    site_index: usize,
    ue: (f64, f64),
    site: (f64, f64),
) -> LinkBudget {
    let mut rng = stream_rng(
        scenario.master_seed,
        drop_index,
        LANE_LINK,
        site_index as u64,
    );
    let d = ((ue.0 - site.0).powi(2) + (ue.1 - site.1).powi(2)).sqrt();
    let d_model = d.max(1e-3);
    let los = rng.random::<f64>() < los_probability(d_model);
    let sigma = if los {
        scenario.shadowing_sigma_los_db
    } else {
        scenario.shadowing_sigma_nlos_db
    };
    let shadow: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
    let pl = pathloss_db(d_model, los, scenario.carrier_ghz);
    LinkBudget {
        distance_m: d_model,
        gain_linear: 10f64.powf(-(pl + shadow) / 10.0),
    }
}

fn serving_channel_mode(mode: SimMode) -> ChannelMode {
    match mode {
        SimMode::Correlated | SimMode::Dpst => ChannelMode::Correlated,
        SimMode::Rayleigh => ChannelMode::Rayleigh,
        SimMode::Optimum => ChannelMode::Optimum,
    }
}

fn interferer_channel_mode(mode: SimMode) -> ChannelMode {
    match mode {
        SimMode::Rayleigh => ChannelMode::Rayleigh,
        _ => ChannelMode::Correlated,
    }
}

fn generator_params(scenario: &ScenarioConfig) -> ChannelParams {
    ChannelParams {
        n_tx: scenario.mimo,
        n_rx: scenario.mimo,
        distance_m: scenario.stats_distance_m,
        tx_spacing_wl: scenario.tx_spacing_wl,
        rx_spacing_wl: scenario.rx_spacing_wl,
        mode: ChannelMode::Correlated,
    }
}

fn run_drop_inner(
    scenario: &ScenarioConfig,
    chan: &ChannelGenerator,
    ops: Option<&ShapingOperators>,
    drop_index: u64,
    with_interference: bool,
) -> Result<DropResult, SystemError> {
    let l = scenario.mimo;
    let p_bs = scenario.bs_power_mw();
    let n0 = scenario.noise_power_mw();
    let sites = hex_layout(scenario.isd_m);

    let mut rng_pos = stream_rng(scenario.master_seed, drop_index, LANE_UE_POSITION, 0);
    let ue = sample_hexagon(scenario.isd_m, &mut rng_pos);

    let budgets: Vec<LinkBudget> = sites
        .iter()
        .enumerate()
        .map(|(k, &site)| draw_link_budget(scenario, drop_index, k, ue, site))
        .collect();

    // Serving channel, amplitude-scaled by its link gain.
    let seed = stream_seed(scenario.master_seed, drop_index, LANE_SERVING, 0);
    let h = chan
        .draw(serving_channel_mode(scenario.mode), budgets[0].distance_m, seed)?
        .h;
    let h_phys = h.scaled_re(budgets[0].gain_linear.sqrt());

    let h_n = match (scenario.mode, ops) {
        (SimMode::Dpst, Some(ops)) => ops.reduced_channel(&h_phys)?.0,
        (SimMode::Dpst, None) => {
            let ops = ShapingOperators::new(&scenario.shaping, l)?;
            ops.reduced_channel(&h_phys)?.0
        }
        _ => h_phys,
    };

    // Interference covariance: each interferer sends its own precoded
    // streams at full power; Phi is the exact covariance of the resulting
    // effective channels at the UE.
    let mut phi = ComplexMatrix::zeros(l, l);
    if with_interference {
        for (k, budget) in budgets.iter().enumerate().skip(1) {
            let seed = stream_seed(scenario.master_seed, drop_index, LANE_INTERFERER, k as u64);
            let hk = chan
                .draw(interferer_channel_mode(scenario.mode), budget.distance_m, seed)?
                .h;
            let mut rng_w = stream_rng(scenario.master_seed, drop_index, LANE_PRECODER, k as u64);
            let wk = random_semi_unitary(l, l, &mut rng_w).scaled_re((p_bs / l as f64).sqrt());
            let gk = hk.matmul(&wk).scaled_re(budget.gain_linear.sqrt());
            phi = phi.add(&gk.matmul(&gk.hermitian()));
        }
    }

    let cond = condition_number(&h_n);
    let link = LinkState::build(h_n, phi, n0, p_bs)?;
    let sinrs = link.stream_sinrs();
    let capacity: f64 = sinrs.iter().map(|&s| (1.0 + s).log2()).sum();
    let effective_sinr = 2f64.powf(capacity / l as f64) - 1.0;
    let tput = throughput_capped(&sinrs, scenario.bandwidth_hz, scenario.se_cap_bps_hz);

    Ok(DropResult {
        ue_position: ue,
        serving_sinr_db: sinrs.iter().map(|&s| 10.0 * s.log10()).collect(),
        throughput_bps: tput,
        condition_number: cond,
        effective_sinr_db: 10.0 * effective_sinr.log10(),
    })
}

/// One Monte-Carlo drop, fully determined by (scenario, drop_index).
pub fn run_drop(scenario: &ScenarioConfig, drop_index: u64) -> Result<DropResult, SystemError> {
    let chan = ChannelGenerator::new(&generator_params(scenario))?;
    run_drop_inner(scenario, &chan, None, drop_index, true)
}

#[cfg(test)]
pub(crate) fn run_drop_single_cell(
    scenario: &ScenarioConfig,
    drop_index: u64,
) -> Result<DropResult, SystemError> {
    let chan = ChannelGenerator::new(&generator_params(scenario))?;
    run_drop_inner(scenario, &chan, None, drop_index, false)
}

/// Run all drops in parallel and assemble the metric CDFs:
/// effective SINR (dB), UE throughput (bit/s), and condition number.
pub fn run_scenario(scenario: &ScenarioConfig) -> Result<BTreeMap<String, CdfSeries>, SystemError> {
    let ops = match scenario.mode {
        SimMode::Dpst => Some(ShapingOperators::new(&scenario.shaping, scenario.mimo)?),
        _ => None,
    };
    let chan = ChannelGenerator::new(&generator_params(scenario))?;
    let drops: Vec<DropResult> = (0..scenario.n_drops as u64)
        .into_par_iter()
        .map(|i| run_drop_inner(scenario, &chan, ops.as_ref(), i, true))
        .collect::<Result<_, _>>()?;

    let mut out = BTreeMap::new();
    out.insert(
        "effective_sinr_db".to_string(),
        CdfSeries::from_values(
            "effective_sinr_db",
            drops.iter().map(|d| d.effective_sinr_db).collect(),
        ),
    );
    out.insert(
        "throughput_bps".to_string(),
        CdfSeries::from_values(
            "throughput_bps",
            drops.iter().map(|d| d.throughput_bps).collect(),
        ),
    );
    out.insert(
        "condition_number".to_string(),
        CdfSeries::from_values(
            "condition_number",
            drops.iter().map(|d| d.condition_number).collect(),
        ),
    );
    Ok(out)
}

/// Mean numerical rank and mean condition number over fixed-distance draws
/// of one mode (the channel-statistics table).
pub struct ChannelStats {
    pub mode: SimMode,
    pub mean_rank: f64,
    pub mean_condition: f64,
}

pub fn channel_statistics(
    scenario: &ScenarioConfig,
    mode: SimMode,
    n_draws: usize,
) -> Result<ChannelStats, SystemError> {
    let chan = ChannelGenerator::new(&generator_params(scenario))?;
    let ops = match mode {
        SimMode::Dpst => Some(ShapingOperators::new(&scenario.shaping, scenario.mimo)?),
        _ => None,
    };
    let results: Vec<(f64, f64)> = (0..n_draws as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64), SystemError> {
            let seed = stream_seed(scenario.master_seed, i, LANE_STATS, mode as u64);
            let h = chan
                .draw(serving_channel_mode(mode), scenario.stats_distance_m, seed)?
                .h;
            let m = match &ops {
                Some(ops) => ops.reduced_channel(&h)?.0,
                None => h,
            };
            let sig = svd(&m)?.sigma;
            let smax = sig[0];
            let rank = sig.iter().filter(|&&s| s > RANK_TOL * smax).count();
            let cond = if rank < sig.len() {
                f64::INFINITY
            } else {
                smax / sig.last().unwrap()
            };
            Ok((rank as f64, cond))
        })
        .collect::<Result<_, _>>()?;
    let n = results.len() as f64;
    Ok(ChannelStats {
        mode,
        mean_rank: results.iter().map(|r| r.0).sum::<f64>() / n,
        mean_condition: results.iter().map(|r| r.1).sum::<f64>() / n,
    })
}

/// Deterministic per-draw seed for optimizer reference ensembles.
pub fn optimizer_ensemble_seed(master_seed: u64, draw: u64) -> u64 {
    stream_seed(master_seed, draw, LANE_OPTIMIZER, 0)
}
