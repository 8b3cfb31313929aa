//! Strict key = value configuration: four sections, unknown keys rejected,
//! every value range-checked with its key path in the error.

use dpst_core::optimizer::{DelayMetric, DelaySearchConfig};
use dpst_core::shaping::ShapingConfig;
use dpst_core::system::{ScenarioConfig, SimMode};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn not_positive(x: f64) -> bool {
    x.is_nan() || x <= 0.0
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Delays given either as explicit fractions of the symbol period or as the
/// keyword "optimize".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DelaysSpec {
    Keyword(String),
    Fractions(Vec<f64>),
}

impl Default for DelaysSpec {
    fn default() -> Self {
        DelaysSpec::Keyword("optimize".to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub isd_m: f64,
    pub area_m: f64,
    pub n_drops: usize,
    pub master_seed: u64,
    pub mimo: usize,
    pub mode: String,
    pub delays: DelaysSpec,
    /// Delays in nanoseconds; requires shaping.assumed_symbol_period_ns.
    pub delays_ns: Option<Vec<f64>>,
    pub stats_distance_m: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            isd_m: 50.0,
            area_m: 500.0,
            n_drops: 10_000,
            master_seed: 1,
            mimo: 2,
            mode: "correlated".to_string(),
            delays: DelaysSpec::default(),
            delays_ns: None,
            stats_distance_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub bs_power_dbm: f64,
    pub noise_figure_db: f64,
    pub shadowing_sigma_los_db: f64,
    pub shadowing_sigma_nlos_db: f64,
    pub tx_spacing_wl: f64,
    pub rx_spacing_wl: f64,
    pub se_cap_bps_hz: Option<f64>,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.0,
            bandwidth_hz: 1e7,
            bs_power_dbm: 24.0,
            noise_figure_db: 9.0,
            shadowing_sigma_los_db: 3.0,
            shadowing_sigma_nlos_db: 4.0,
            tx_spacing_wl: 0.5,
            rx_spacing_wl: 0.5,
            se_cap_bps_hz: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingSection {
    pub symbol_period: f64,
    pub m_len: usize,
    pub tx_oversampling: usize,
    pub rx_oversampling: usize,
    /// Physical symbol period assumed when delays are given in nanoseconds.
    pub assumed_symbol_period_ns: Option<f64>,
}

impl Default for ShapingSection {
    fn default() -> Self {
        Self {
            symbol_period: 1.0,
            m_len: 10,
            tx_oversampling: 2,
            rx_oversampling: 2,
            assumed_symbol_period_ns: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub grid_points_per_dim: usize,
    pub epsilon: f64,
    pub ensemble_size: usize,
    pub metric: String,
    pub max_delay: f64,
    pub max_evaluations: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            grid_points_per_dim: 100,
            epsilon: 0.3,
            ensemble_size: 200,
            metric: "condition-number".to_string(),
            max_delay: 1.0,
            max_evaluations: 200_000,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub scenario: ScenarioSection,
    pub radio: RadioSection,
    pub shaping: ShapingSection,
    pub search: SearchSection,
}

/// How the delays are to be obtained for DPST runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedDelays {
    Optimize,
    Explicit(Vec<f64>),
}

/// A validated configuration, ready to drive the simulator.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub file: FileConfig,
    pub scenario: ScenarioConfig,
    pub search: DelaySearchConfig,
    pub delays: ResolvedDelays,
    /// Set when nanosecond delays were converted to fractions.
    pub delay_unit_note: Option<String>,
}

pub fn parse_config_str(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(file)
}

pub fn parse_config(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn default_config() -> ResolvedConfig {
    resolve(FileConfig::default()).expect("default configuration must validate")
}

pub fn parse_mode(s: &str) -> Result<SimMode, ConfigError> {
    match s {
        "correlated" => Ok(SimMode::Correlated),
        "rayleigh" => Ok(SimMode::Rayleigh),
        "dpst" => Ok(SimMode::Dpst),
        "optimum" => Ok(SimMode::Optimum),
        other => Err(invalid(
            "scenario.mode",
            format!("unknown mode {other:?} (expected correlated|rayleigh|dpst|optimum)"),
        )),
    }
}

fn resolve(file: FileConfig) -> Result<ResolvedConfig, ConfigError> {
    let s = &file.scenario;
    let r = &file.radio;
    let sh = &file.shaping;
    let se = &file.search;

    if not_positive(s.isd_m) {
        return Err(invalid("scenario.isd_m", "must be positive"));
    }
    if not_positive(s.area_m) {
        return Err(invalid("scenario.area_m", "must be positive"));
    }
    if s.n_drops == 0 {
        return Err(invalid("scenario.n_drops", "must be at least 1"));
    }
    if !(s.mimo == 2 || s.mimo == 4) {
        return Err(invalid("scenario.mimo", "must be 2 or 4"));
    }
    if not_positive(s.stats_distance_m) {
        return Err(invalid("scenario.stats_distance_m", "must be positive"));
    }
    let mode = parse_mode(&s.mode)?;

    if not_positive(r.carrier_ghz) {
        return Err(invalid("radio.carrier_ghz", "must be positive"));
    }
    if not_positive(r.bandwidth_hz) {
        return Err(invalid("radio.bandwidth_hz", "must be positive"));
    }
    if r.shadowing_sigma_los_db < 0.0 {
        return Err(invalid("radio.shadowing_sigma_los_db", "must be non-negative"));
    }
    if r.shadowing_sigma_nlos_db < 0.0 {
        return Err(invalid("radio.shadowing_sigma_nlos_db", "must be non-negative"));
    }
    if not_positive(r.tx_spacing_wl) {
        return Err(invalid("radio.tx_spacing_wl", "must be positive"));
    }
    if not_positive(r.rx_spacing_wl) {
        return Err(invalid("radio.rx_spacing_wl", "must be positive"));
    }
    if let Some(cap) = r.se_cap_bps_hz {
        if not_positive(cap) {
            return Err(invalid("radio.se_cap_bps_hz", "must be positive when set"));
        }
    }

    if not_positive(sh.symbol_period) {
        return Err(invalid("shaping.symbol_period", "must be positive"));
    }
    if sh.m_len == 0 {
        return Err(invalid("shaping.m_len", "must be at least 1"));
    }
    if sh.tx_oversampling == 0 {
        return Err(invalid("shaping.tx_oversampling", "must be at least 1"));
    }
    if sh.rx_oversampling == 0 {
        return Err(invalid("shaping.rx_oversampling", "must be at least 1"));
    }

    if se.grid_points_per_dim < 2 {
        return Err(invalid("search.grid_points_per_dim", "must be at least 2"));
    }
    if not_positive(se.epsilon) || se.epsilon >= 1.0 {
        return Err(invalid("search.epsilon", "must lie in (0, 1)"));
    }
    if se.ensemble_size == 0 {
        return Err(invalid("search.ensemble_size", "must be at least 1"));
    }
    if not_positive(se.max_delay) || se.max_delay > sh.symbol_period {
        return Err(invalid("search.max_delay", "must lie in (0, symbol_period]"));
    }
    if se.max_evaluations == 0 {
        return Err(invalid("search.max_evaluations", "must be at least 1"));
    }
    let metric = match se.metric.as_str() {
        "condition-number" => DelayMetric::ConditionNumber,
        "covariance-diagonalization" => DelayMetric::CovarianceDiagonalization,
        other => {
            return Err(invalid(
                "search.metric",
                format!("unknown metric {other:?} (expected condition-number|covariance-diagonalization)"),
            ))
        }
    };

    // Delays: explicit fractions, nanoseconds, or the optimize keyword.
    let mut delay_unit_note = None;
    let delays = match (&s.delays, &s.delays_ns) {
        (DelaysSpec::Fractions(_), Some(_)) => {
            return Err(invalid(
                "scenario.delays_ns",
                "give delays either as fractions or in nanoseconds, not both",
            ));
        }
        (DelaysSpec::Fractions(f), None) => ResolvedDelays::Explicit(f.clone()),
        (DelaysSpec::Keyword(k), ns) => {
            if k != "optimize" {
                return Err(invalid(
                    "scenario.delays",
                    format!("expected a list of fractions or \"optimize\", got {k:?}"),
                ));
            }
            match ns {
                Some(list) => {
                    let period = sh.assumed_symbol_period_ns.ok_or_else(|| {
                        invalid(
                            "scenario.delays_ns",
                            "requires shaping.assumed_symbol_period_ns",
                        )
                    })?;
                    if not_positive(period) {
                        return Err(invalid(
                            "shaping.assumed_symbol_period_ns",
                            "must be positive",
                        ));
                    }
                    delay_unit_note = Some(format!(
                        "delays_ns converted to fractions of the symbol period assuming T_s = {period} ns"
                    ));
                    ResolvedDelays::Explicit(
                        list.iter().map(|ns| ns / period * sh.symbol_period).collect(),
                    )
                }
                None => ResolvedDelays::Optimize,
            }
        }
    };
    if let ResolvedDelays::Explicit(list) = &delays {
        if list.len() != s.mimo {
            return Err(invalid(
                "scenario.delays",
                format!("expected {} entries (one per transmit antenna), got {}", s.mimo, list.len()),
            ));
        }
        if list[0] != 0.0 {
            return Err(invalid("scenario.delays", "first antenna delay must be 0"));
        }
        for &d in list {
            if !(0.0..sh.symbol_period).contains(&d) {
                return Err(invalid(
                    "scenario.delays",
                    format!("delay {d} outside [0, symbol_period)"),
                ));
            }
        }
    }

    let shaping = ShapingConfig {
        symbol_period: sh.symbol_period,
        m_len: sh.m_len,
        tx_oversampling: sh.tx_oversampling,
        rx_oversampling: sh.rx_oversampling,
        // Placeholder zeros until delays are resolved for DPST runs.
        delays: match &delays {
            ResolvedDelays::Explicit(list) => list.clone(),
            ResolvedDelays::Optimize => vec![0.0; s.mimo],
        },
    };

    let scenario = ScenarioConfig {
        isd_m: s.isd_m,
        area_m: s.area_m,
        carrier_ghz: r.carrier_ghz,
        bandwidth_hz: r.bandwidth_hz,
        bs_power_dbm: r.bs_power_dbm,
        noise_figure_db: r.noise_figure_db,
        shadowing_sigma_los_db: r.shadowing_sigma_los_db,
        shadowing_sigma_nlos_db: r.shadowing_sigma_nlos_db,
        n_drops: s.n_drops,
        master_seed: s.master_seed,
        mimo: s.mimo,
        mode,
        tx_spacing_wl: r.tx_spacing_wl,
        rx_spacing_wl: r.rx_spacing_wl,
        shaping,
        se_cap_bps_hz: r.se_cap_bps_hz,
        stats_distance_m: s.stats_distance_m,
    };

    let search = DelaySearchConfig {
        grid_points_per_dim: se.grid_points_per_dim,
        epsilon: se.epsilon,
        ensemble_size: se.ensemble_size,
        metric,
        max_delay: se.max_delay,
        max_evaluations: se.max_evaluations,
    };

    Ok(ResolvedConfig {
        file,
        scenario,
        search,
        delays,
        delay_unit_note,
    })
}
