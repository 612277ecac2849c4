//! Experiment configuration files (TOML, strict).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    /// Filter steps; data scenarios default to every available test snapshot.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Sampling interval, a whole multiple of the scenario's base interval.
    #[serde(default)]
    pub sampling_dt: Option<f64>,
    pub outputs: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    pub scenario: Scenario,
    pub model: ModelChoice,
    pub sensors: Sensors,
    pub noise: Noise,
    #[serde(default)]
    pub filter: FilterOptions,
    /// Parameter grid: dotted config path -> values. Points are the cartesian product.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Torus {
        rows: usize,
        cols: usize,
        n_fourier: usize,
        n_gauss: usize,
        gauss_width: f64,
        freq_range: [f64; 2],
        damp_range: [f64; 2],
        dt: f64,
    },
    Ks {
        n_grid: usize,
        domain_length: f64,
        dt_solver: f64,
        #[serde(default)]
        t_start: f64,
        t_final: f64,
        output_dt: f64,
        #[serde(default = "half")]
        train_fraction: f64,
    },
    Gridded {
        path: PathBuf,
        /// `binary_grid` or `csv_grid`; guessed from the extension when absent.
        #[serde(default)]
        format: Option<String>,
        #[serde(default = "half")]
        train_fraction: f64,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelChoice {
    /// The generator's own model (torus only).
    Known,
    /// Exact DMD of the training snapshots at the base interval.
    Dmd {
        rank: usize,
        /// Simulated training length for the torus scenario.
        #[serde(default)]
        train_steps: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    Stationary,
    Mobile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensors {
    pub k: usize,
    pub mode: SensorMode,
    /// Cells per sampling step (mobile).
    #[serde(default)]
    pub speed: Option<f64>,
    /// Cycle length in sampling steps; defaults to the Nyquist budget.
    #[serde(default)]
    pub period: Option<usize>,
    /// Plan at a rate this many times slower and refine (multiscale completion).
    #[serde(default)]
    pub refine: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Disturbance variance per unit time; each step adds `q * sampling_dt`.
    pub q: f64,
    /// Measurement noise variance.
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// Truth simulated from the model (torus with the known model).
    Simulate,
    /// Test data rows used directly.
    Raw,
    /// Test data rows plus `N(0, rho)` noise.
    Noisy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterOptions {
    #[serde(default = "default_prior")]
    pub prior: f64,
    #[serde(default)]
    pub measurements: Option<MeasurementKind>,
}

fn default_prior() -> f64 {
    obsplan::kalman::DEFAULT_PRIOR_SCALE
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            prior: default_prior(),
            measurements: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative data paths resolve against the config file's directory.
        if let Scenario::Gridded { path: p, .. } = &mut cfg.scenario {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Base sampling interval of the scenario, when known without loading data.
    pub fn base_dt(&self) -> Option<f64> {
        match &self.scenario {
            Scenario::Torus { dt, .. } => Some(*dt),
            Scenario::Ks { output_dt, .. } => Some(*output_dt),
            Scenario::Gridded { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.sensors.k == 0 {
            return bad("sensors.k must be at least 1".into());
        }
        if let Some(s) = self.steps {
            if s == 0 {
                return bad("steps must be at least 1".into());
            }
        }
        if !(self.noise.q >= 0.0 && self.noise.rho > 0.0) {
            return bad("noise needs q >= 0 and rho > 0".into());
        }
        if !(self.filter.prior > 0.0) {
            return bad("filter.prior must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        match self.sensors.mode {
            SensorMode::Stationary => {
                if self.sensors.speed.is_some() || self.sensors.period.is_some() || self.sensors.refine.is_some() {
                    return bad("stationary sensors take no speed, period or refine".into());
                }
            }
            SensorMode::Mobile => {
                match self.sensors.speed {
                    Some(v) if v >= 0.0 => {}
                    _ => return bad("mobile sensors need speed >= 0".into()),
                }
                if self.sensors.period == Some(0) {
                    return bad("sensors.period must be at least 1".into());
                }
                if let Some(f) = self.sensors.refine {
                    if f < 2 {
                        return bad("sensors.refine must be at least 2".into());
                    }
                    match self.sensors.period {
                        Some(p) if p % f == 0 => {}
                        _ => return bad("sensors.refine needs an explicit period divisible by it".into()),
                    }
                }
            }
        }
        if let Some(dt) = self.sampling_dt {
            if !(dt > 0.0) {
                return bad("sampling_dt must be positive".into());
            }
            if let Some(base) = self.base_dt() {
                stride_for(dt, base)?;
            }
        }
        match (&self.scenario, &self.model) {
            (Scenario::Torus { rows, cols, n_fourier, n_gauss, gauss_width, freq_range, damp_range, dt }, _) => {
                let spec = obsplan::scenarios::TorusSpec {
                    rows: *rows,
                    cols: *cols,
                    n_fourier: *n_fourier,
                    n_gauss: *n_gauss,
                    gauss_width: *gauss_width,
                    freq_range: *freq_range,
                    damp_range: *damp_range,
                    dt: *dt,
                    seed: self.seed,
                };
                spec.validate().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
                if self.steps.is_none() {
                    return bad("torus runs need steps".into());
                }
                if matches!(self.filter.measurements, Some(MeasurementKind::Raw | MeasurementKind::Noisy)) {
                    return bad("torus runs simulate their measurements".into());
                }
            }
            (Scenario::Ks { n_grid, domain_length, dt_solver, t_start, t_final, output_dt, train_fraction }, model) => {
                let spec = obsplan::scenarios::KsSpec {
                    n_grid: *n_grid,
                    domain_length: *domain_length,
                    dt_solver: *dt_solver,
                    t_start: *t_start,
                    t_final: *t_final,
                    output_dt: *output_dt,
                    seed: self.seed,
                };
                spec.validate().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
                check_fraction(*train_fraction)?;
                data_model_checks(model, self.filter.measurements)?;
            }
            (Scenario::Gridded { path, format, train_fraction }, model) => {
                if !path.exists() {
                    return bad(format!("data file {} does not exist", path.display()));
                }
                if let Some(f) = format {
                    obsplan::scenarios::GridFormat::parse(f).map_err(|e| CliError::Config(e.to_string()))?;
                }
                check_fraction(*train_fraction)?;
                data_model_checks(model, self.filter.measurements)?;
            }
        }
        if let ModelChoice::Dmd { rank, .. } = self.model {
            if rank == 0 {
                return bad("model.rank must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Every sweep point as `(key, config)`, validated; a config without a sweep
    /// yields one point with an empty key.
    pub fn expand(&self) -> Result<Vec<(String, ExperimentConfig)>, CliError> {
        if self.sweep.is_empty() {
            self.validate()?;
            return Ok(vec![(String::new(), self.clone())]);
        }
        let mut base = toml::Value::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        if let toml::Value::Table(t) = &mut base {
            t.remove("sweep");
        }
        let axes: Vec<(&String, &Vec<toml::Value>)> = self.sweep.iter().collect();
        for (name, values) in &axes {
            if values.is_empty() {
                return Err(CliError::Config(format!("sweep axis '{name}' is empty")));
            }
        }
        let mut points = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut value = base.clone();
            let mut key = Vec::with_capacity(axes.len());
            for (a, (name, values)) in axes.iter().enumerate() {
                let v = &values[idx[a]];
                set_path(&mut value, name, v.clone())?;
                key.push(format!("{name}={}", display_value(v)));
            }
            let key = key.join(",");
            let cfg: ExperimentConfig = value
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("sweep point {key}: {e}")))?;
            cfg.validate()
                .map_err(|e| CliError::Config(format!("sweep point {key}: {e}")))?;
            points.push((key, cfg));
            // Odometer increment, last axis fastest.
            let mut a = axes.len();
            loop {
                if a == 0 {
                    return Ok(points);
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < axes[a].1.len() {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

fn check_fraction(f: f64) -> Result<(), CliError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config("train_fraction must lie in (0, 1)".into()))
    }
}

fn data_model_checks(model: &ModelChoice, meas: Option<MeasurementKind>) -> Result<(), CliError> {
    if matches!(model, ModelChoice::Known) {
        return Err(CliError::Config("data scenarios need a dmd model".into()));
    }
    if meas == Some(MeasurementKind::Simulate) {
        return Err(CliError::Config("data scenarios measure their data (raw or noisy)".into()));
    }
    Ok(())
}

/// Whole number of base intervals in `dt`.
pub fn stride_for(dt: f64, base: f64) -> Result<usize, CliError> {
    let s = (dt / base).round();
    if s < 1.0 || (s * base - dt).abs() > 1e-9 * dt {
        return Err(CliError::Config(format!(
            "sampling_dt {dt} is not a whole multiple of the base interval {base}"
        )));
    }
    Ok(s as usize)
}

fn set_path(root: &mut toml::Value, path: &str, v: toml::Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("sweep path '{path}' does not name a table entry")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), v);
            return Ok(());
        }
        cur = table
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("sweep path '{path}': no section '{part}'")))?;
    }
    unreachable!()
}

fn display_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
