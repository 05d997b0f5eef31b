//! Flat `key = value` configuration with `#` comments and comma lists.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::modulation::Regime;

/// Shape of the admissible perturbation added to `Q` in the theorem sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    EPlus,
    Gaussian,
    QSecond,
    None,
}

impl FromStr for PerturbationKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e_plus" => Ok(Self::EPlus),
            "gaussian" => Ok(Self::Gaussian),
            "q_second" => Ok(Self::QSecond),
            "none" => Ok(Self::None),
            other => Err(config(format!(
                "unknown perturbation '{other}' (expected e_plus, gaussian, q_second or none)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_points: usize,
    pub domain_length: f64,
    pub dt: f64,
    /// Spacing of tracked snapshots in the theorem sweep.
    pub snapshot_interval: f64,
    pub seed: u64,

    pub h: Vec<f64>,
    pub bump_amplitude: f64,
    pub bump_width: f64,
    pub perturbation: PerturbationKind,
    /// `δ = delta_scale · h^{3/2}`
    pub delta_scale: f64,
    pub regime: Regime,
    pub mu0: f64,
    /// Overrides the `T₀` rule when set.
    pub t_end: Option<f64>,

    pub trajectory_h: Vec<f64>,
    pub s_end: f64,
    pub dt_s: f64,

    pub spectrum_n: usize,
    pub spectrum_length: f64,
    pub coercivity_n: usize,
    pub coercivity_length: f64,

    pub evolve_h: f64,
    pub evolve_t_end: f64,
    pub reversal_t: f64,
    pub linear_t_end: f64,
    pub checkpoint_interval: f64,

    pub gammas: Vec<f64>,
    pub y0s: Vec<f64>,
    pub virial_t_end: f64,
    pub virial_dt: f64,
    pub virial_width: f64,
    pub virial_carrier: f64,
    pub forcing_amplitude: f64,
    pub forcing_width: f64,
    pub monotonicity_a: f64,
    pub monotonicity_lambda: f64,
    pub monotonicity_y0: f64,
    pub probe_gammas: Vec<f64>,
    pub probe_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_points: 8192,
            domain_length: 1024.0,
            dt: crate::evolution::DEFAULT_DT,
            snapshot_interval: 0.1,
            seed: 0x5eed,
            h: vec![0.1, 0.05, 0.025],
            bump_amplitude: crate::potential::DEFAULT_BUMP_AMPLITUDE,
            bump_width: 4.0,
            perturbation: PerturbationKind::Gaussian,
            delta_scale: 1.0,
            regime: Regime::Symplectic,
            mu0: 1.0,
            t_end: None,
            trajectory_h: vec![0.2, 0.1, 0.05],
            s_end: 3.0,
            dt_s: crate::trajectories::DEFAULT_DT_S,
            spectrum_n: 2048,
            spectrum_length: 512.0,
            coercivity_n: 1024,
            coercivity_length: 256.0,
            evolve_h: 0.05,
            evolve_t_end: 200.0,
            reversal_t: 10.0,
            linear_t_end: 10.0,
            checkpoint_interval: 50.0,
            gammas: vec![0.05],
            y0s: vec![-50.0, 0.0, 50.0],
            virial_t_end: 20.0,
            virial_dt: crate::evolution::DEFAULT_DT,
            virial_width: 120.0,
            virial_carrier: 0.5,
            forcing_amplitude: 0.1,
            forcing_width: 2.0,
            monotonicity_a: 10.0,
            monotonicity_lambda: 0.5,
            monotonicity_y0: 20.0,
            probe_gammas: vec![0.2, 0.1, 0.05],
            probe_trials: 8,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_seed(key: &str, value: &str) -> Result<u64> {
    match value.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16)
            .map_err(|_| config(format!("cannot parse '{value}' for key '{key}'"))),
        None => parse_one(key, value),
    }
}

/// Splits text into `key → value`, rejecting malformed lines and repeats.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n_points" => self.n_points = parse_one(key, v)?,
            "domain_length" => self.domain_length = parse_one(key, v)?,
            "dt" => self.dt = parse_one(key, v)?,
            "snapshot_interval" => self.snapshot_interval = parse_one(key, v)?,
            "seed" => self.seed = parse_seed(key, v)?,
            "h" => self.h = parse_list(key, v)?,
            "bump_amplitude" => self.bump_amplitude = parse_one(key, v)?,
            "bump_width" => self.bump_width = parse_one(key, v)?,
            "perturbation" => self.perturbation = v.parse()?,
            "delta_scale" => self.delta_scale = parse_one(key, v)?,
            "regime" => {
                self.regime = match v {
                    "symplectic" => Regime::Symplectic,
                    "nonsymplectic" => Regime::Nonsymplectic,
                    other => return Err(config(format!("unknown regime '{other}'"))),
                }
            }
            "mu0" => self.mu0 = parse_one(key, v)?,
            "t_end" => self.t_end = Some(parse_one(key, v)?),
            "trajectory_h" => self.trajectory_h = parse_list(key, v)?,
            "s_end" => self.s_end = parse_one(key, v)?,
            "dt_s" => self.dt_s = parse_one(key, v)?,
            "spectrum_n" => self.spectrum_n = parse_one(key, v)?,
            "spectrum_length" => self.spectrum_length = parse_one(key, v)?,
            "coercivity_n" => self.coercivity_n = parse_one(key, v)?,
            "coercivity_length" => self.coercivity_length = parse_one(key, v)?,
            "evolve_h" => self.evolve_h = parse_one(key, v)?,
            "evolve_t_end" => self.evolve_t_end = parse_one(key, v)?,
            "reversal_t" => self.reversal_t = parse_one(key, v)?,
            "linear_t_end" => self.linear_t_end = parse_one(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_one(key, v)?,
            "gammas" => self.gammas = parse_list(key, v)?,
            "y0s" => self.y0s = parse_list(key, v)?,
            "virial_t_end" => self.virial_t_end = parse_one(key, v)?,
            "virial_dt" => self.virial_dt = parse_one(key, v)?,
            "virial_width" => self.virial_width = parse_one(key, v)?,
            "virial_carrier" => self.virial_carrier = parse_one(key, v)?,
            "forcing_amplitude" => self.forcing_amplitude = parse_one(key, v)?,
            "forcing_width" => self.forcing_width = parse_one(key, v)?,
            "monotonicity_a" => self.monotonicity_a = parse_one(key, v)?,
            "monotonicity_lambda" => self.monotonicity_lambda = parse_one(key, v)?,
            "monotonicity_y0" => self.monotonicity_y0 = parse_one(key, v)?,
            "probe_gammas" => self.probe_gammas = parse_list(key, v)?,
            "probe_trials" => self.probe_trials = parse_one(key, v)?,
            other => return Err(config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("domain_length", self.domain_length),
            ("dt", self.dt),
            ("snapshot_interval", self.snapshot_interval),
            ("bump_width", self.bump_width),
            ("delta_scale", self.delta_scale),
            ("mu0", self.mu0),
            ("s_end", self.s_end),
            ("dt_s", self.dt_s),
            ("spectrum_length", self.spectrum_length),
            ("coercivity_length", self.coercivity_length),
            ("evolve_h", self.evolve_h),
            ("evolve_t_end", self.evolve_t_end),
            ("reversal_t", self.reversal_t),
            ("linear_t_end", self.linear_t_end),
            ("checkpoint_interval", self.checkpoint_interval),
            ("virial_t_end", self.virial_t_end),
            ("virial_dt", self.virial_dt),
            ("virial_width", self.virial_width),
            ("forcing_width", self.forcing_width),
            ("monotonicity_a", self.monotonicity_a),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config(format!("t_end must be positive, got {t}")));
            }
        }
        for (name, list) in [("h", &self.h), ("trajectory_h", &self.trajectory_h)] {
            if list.is_empty() {
                return Err(config(format!("{name} must list at least one value")));
            }
            if let Some(h) = list.iter().find(|h| !(**h > 0.0 && **h <= 1.0)) {
                return Err(config(format!("{name} entries need 0 < h <= 1, got {h}")));
            }
        }
        if !(self.snapshot_interval / self.dt).fract().abs().min(1.0 - (self.snapshot_interval / self.dt).fract()).lt(&1e-9) {
            return Err(config("snapshot_interval must be a multiple of dt"));
        }
        if self.probe_trials == 0 {
            return Err(config("probe_trials must be positive"));
        }
        if !(self.monotonicity_lambda > 0.0 && self.monotonicity_lambda < 1.0) {
            return Err(config("monotonicity_lambda must lie in (0, 1)"));
        }
        if !(self.monotonicity_y0 > 1.0) {
            return Err(config("monotonicity_y0 must exceed 1"));
        }
        crate::grid::make_grid(self.n_points, self.domain_length)?;
        crate::grid::make_grid(self.spectrum_n, self.spectrum_length)?;
        crate::grid::make_grid(self.coercivity_n, self.coercivity_length)?;
        Ok(())
    }

    /// Steps of size `dt` in `interval`, which must be a whole multiple.
    pub fn steps_per(&self, interval: f64, dt: f64) -> usize {
        (interval / dt).round() as usize
    }
}
