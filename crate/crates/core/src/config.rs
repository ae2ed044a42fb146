//! Scenario configuration, unit conversions and provenance hashing.
//!
//! The file format is flat `key = value` text (a TOML subset). Every key is
//! optional; omitted keys take the defaults of the reference highway scenario
//! (two base stations 20 m from the road, 100 MHz at 30 GHz, 100 us slots).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Noise-only false-alarm probability used as the floor for detection thresholds.
pub const FALSE_ALARM: f64 = 0.01;

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(p_watt: f64) -> f64 {
    10.0 * p_watt.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Matched-filter decision threshold for BT or DT feedback.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Threshold {
    /// Chosen per action from its target SNR, see [`crate::model::feedback::auto_threshold`].
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Auto => s.serialize_str("auto"),
            Threshold::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Int(i64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Threshold::Fixed(v)),
            Repr::Int(v) => Ok(Threshold::Fixed(v as f64)),
            Repr::Name(s) if s.eq_ignore_ascii_case("auto") => Ok(Threshold::Auto),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Antenna elements per base station.
    pub num_antennas: u32,
    /// Angular coverage of each base station, degrees.
    pub coverage_angle: f64,
    /// Slot duration, seconds.
    pub slot_duration: f64,
    /// Distance between the road and each base station, meters.
    pub road_distance: f64,
    /// Signal bandwidth, Hz.
    pub bandwidth: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd: f64,
    /// Fraction of each DT slot spent on pilots.
    pub pilot_fraction: f64,
    /// Handover duration, slots.
    pub handover_slots: u32,
    /// Per-slot LOS -> blocked probability.
    pub blockage_p10: f64,
    /// Per-slot blocked -> LOS probability.
    pub blockage_p01: f64,
    /// Second base station overrides; `None` mirrors the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blockage_p10_bs2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blockage_p01_bs2: Option<f64>,
    /// Mean speed, m/s.
    pub speed_mean: f64,
    /// Speed standard deviation, m/s.
    pub speed_std: f64,
    /// Gauss-Markov memory parameter.
    pub memory: f64,
    pub num_sectors: usize,
    /// Side-lobe to main-lobe gain ratio.
    pub sidelobe_ratio: f64,
    pub symbols_per_slot: u32,
    pub bt_threshold: Threshold,
    pub dt_threshold: Threshold,
    /// Candidate DT durations, slots (each >= 2).
    pub dt_durations: Vec<u32>,
    /// Candidate transmit powers, dBm.
    pub power_levels: Vec<f64>,
    /// Throughput/energy trade-off weight in Mbit per Joule.
    pub lambda: f64,
    /// Trade-off weights visited by `sweep`, Mbit per Joule.
    pub lambda_grid: Vec<f64>,
    pub belief_set_size: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Gauss-Markov trajectories used to estimate the sector chain.
    pub mobility_trajectories: usize,
    /// Seed for the trajectories behind the sector chain. Part of the model.
    pub mobility_seed: u64,
    /// Solver stopping tolerance relative to the largest per-slot reward.
    pub solver_tol: f64,
    pub max_iters: usize,
    /// DT duration used by the FSM heuristic and the baseline.
    pub fsm_dt_duration: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_antennas: 128,
            coverage_angle: 90.0,
            slot_duration: 100e-6,
            road_distance: 20.0,
            bandwidth: 100e6,
            carrier_freq: 30e9,
            noise_psd: -163.0,
            pilot_fraction: 0.01,
            handover_slots: 1,
            blockage_p10: 1.25e-4,
            blockage_p01: 5e-4,
            blockage_p10_bs2: None,
            blockage_p01_bs2: None,
            speed_mean: 30.0,
            speed_std: 10.0,
            memory: 0.2,
            num_sectors: 8,
            sidelobe_ratio: 0.01,
            symbols_per_slot: 1000,
            bt_threshold: Threshold::Auto,
            dt_threshold: Threshold::Auto,
            dt_durations: vec![10, 20, 40],
            power_levels: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            lambda: 100.0,
            lambda_grid: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
            belief_set_size: 300,
            episodes: 1000,
            seed: 1,
            mobility_trajectories: 500,
            mobility_seed: 1,
            solver_tol: 1e-4,
            max_iters: 500,
            fsm_dt_duration: 10,
        }
    }
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let probs = [
            ("blockage_p10", Some(self.blockage_p10)),
            ("blockage_p01", Some(self.blockage_p01)),
            ("blockage_p10_bs2", self.blockage_p10_bs2),
            ("blockage_p01_bs2", self.blockage_p01_bs2),
        ];
        for (name, p) in probs {
            if let Some(p) = p {
                if !is_prob(p) {
                    return fail(format!("{name} = {p} is not a probability"));
                }
            }
        }
        let positive = [
            ("slot_duration", self.slot_duration),
            ("road_distance", self.road_distance),
            ("bandwidth", self.bandwidth),
            ("carrier_freq", self.carrier_freq),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.coverage_angle > 0.0 && self.coverage_angle < 180.0) {
            return fail(format!("coverage_angle = {} must lie in (0, 180)", self.coverage_angle));
        }
        if self.num_sectors < 2 {
            return fail(format!("num_sectors = {} must be at least 2", self.num_sectors));
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction < 1.0) {
            return fail(format!("pilot_fraction = {} must lie in (0, 1)", self.pilot_fraction));
        }
        if !(self.sidelobe_ratio > 0.0 && self.sidelobe_ratio < 1.0) {
            return fail(format!("sidelobe_ratio = {} must lie in (0, 1)", self.sidelobe_ratio));
        }
        if !(0.0..1.0).contains(&self.memory) {
            return fail(format!("memory = {} must lie in [0, 1)", self.memory));
        }
        if self.speed_std < 0.0 || !self.speed_mean.is_finite() {
            return fail("speed_mean must be finite and speed_std non-negative".into());
        }
        if self.handover_slots == 0 {
            return fail("handover_slots must be at least 1".into());
        }
        if self.symbols_per_slot == 0 {
            return fail("symbols_per_slot must be at least 1".into());
        }
        if self.dt_durations.is_empty() || self.dt_durations.iter().any(|&t| t < 2) {
            return fail(format!("dt_durations {:?} must be non-empty and all >= 2", self.dt_durations));
        }
        if self.fsm_dt_duration < 2 {
            return fail("fsm_dt_duration must be >= 2".into());
        }
        if self.power_levels.is_empty() || self.power_levels.iter().any(|p| !p.is_finite()) {
            return fail("power_levels must be a non-empty list of finite dBm values".into());
        }
        for (name, t) in [("bt_threshold", self.bt_threshold), ("dt_threshold", self.dt_threshold)] {
            if let Threshold::Fixed(v) = t {
                if !(v > 0.0) {
                    return fail(format!("{name} = {v} must be positive"));
                }
            }
        }
        if !(self.lambda >= 0.0) || self.lambda_grid.iter().any(|&l| !(l >= 0.0)) {
            return fail("lambda values must be non-negative".into());
        }
        if self.belief_set_size == 0 || self.mobility_trajectories == 0 {
            return fail("belief_set_size and mobility_trajectories must be positive".into());
        }
        if !(self.solver_tol > 0.0) || self.max_iters == 0 {
            return fail("solver_tol must be positive and max_iters at least 1".into());
        }
        Ok(())
    }

    /// Parses config text, then applies `overrides` (`key`, raw value) in order.
    pub fn from_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            key: e.span().map(|s| snippet(text, s)).unwrap_or_else(|| "<file>".into()),
            message: e.message().to_string(),
        })?;
        for (key, raw) in overrides {
            let key = key.replace('-', "_");
            table.insert(key, parse_value(raw));
        }
        // Deserialize key by key first so the error names the offending entry.
        for (key, value) in &table {
            let mut single = toml::Table::new();
            single.insert(key.clone(), value.clone());
            if let Err(e) = single.try_into::<ScenarioConfig>() {
                return Err(Error::Config { key: key.clone(), message: e.message().to_string() });
            }
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config { key: "<file>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn blockage_bs2(&self) -> (f64, f64) {
        (
            self.blockage_p10_bs2.unwrap_or(self.blockage_p10),
            self.blockage_p01_bs2.unwrap_or(self.blockage_p01),
        )
    }

    /// Total noise power over the band, W.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watt(self.noise_psd) * self.bandwidth
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Hash over the fields that define the POMDP (dynamics, catalog, feedback).
    /// Run controls such as `seed`, `episodes` or `lambda` are excluded.
    pub fn config_hash(&self) -> String {
        let mut model = self.clone();
        let run = ScenarioConfig::default();
        model.lambda = run.lambda;
        model.lambda_grid = run.lambda_grid;
        model.belief_set_size = run.belief_set_size;
        model.episodes = run.episodes;
        model.seed = run.seed;
        model.solver_tol = run.solver_tol;
        model.max_iters = run.max_iters;
        model.fsm_dt_duration = run.fsm_dt_duration;
        let digest = Sha256::digest(model.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with_overrides(path, &[])
}

pub fn load_config_with_overrides(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_str_with_overrides(&text, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => {
            // Bare comma lists such as `10,20,40` become arrays.
            if raw.contains(',') {
                let wrapped = format!("v = [{raw}]");
                if let Ok(mut t) = wrapped.parse::<toml::Table>() {
                    return t.remove("v").expect("key present");
                }
            }
            toml::Value::String(raw.to_string())
        }
    }
}

fn snippet(text: &str, span: std::ops::Range<usize>) -> String {
    let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = &text[line_start..line_end];
    line.split('=').next().unwrap_or(line).trim().to_string()
}
