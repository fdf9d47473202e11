//! Experiment configuration: a TOML file, overridden field by field from the
//! command line.

use std::fmt;
use std::path::{Path, PathBuf};

use classa_core::mixture::{Scenario, DEFAULT_TRUNCATION};
use classa_core::{Criterion, Nonlinearity, SolverConfig};
use serde::{Deserialize, Serialize};

/// Bad input detected before any computation starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(rename = "A")]
    pub impulsive_index: Vec<f64>,
    #[serde(rename = "T")]
    pub gauss_ratio: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub source_power: f64,
    pub estimators: Vec<Nonlinearity>,
    pub criteria: Vec<Criterion>,
    pub alpha_grid: Option<Vec<f64>>,
    pub n_samples: usize,
    pub seed: u64,
    pub truncation: usize,
    pub epsilon: f64,
    pub mu: f64,
    pub n_max: usize,
    pub out: Option<PathBuf>,
    /// Worker threads; all available cores when unset.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            impulsive_index: vec![0.01],
            gauss_ratio: vec![0.1, 1.0],
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            source_power: 1.0,
            estimators: vec![Nonlinearity::SoftLimiter, Nonlinearity::Blanker],
            criteria: vec![Criterion::Mmse, Criterion::Msnr],
            alpha_grid: None,
            n_samples: 1_000_000,
            seed: 1,
            truncation: DEFAULT_TRUNCATION,
            epsilon: solver.epsilon,
            mu: solver.mu,
            n_max: solver.n_max,
            out: None,
            workers: None,
        }
    }
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub impulsive_index: f64,
    pub gauss_ratio: f64,
    pub snr_db: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            mu: self.mu,
            n_max: self.n_max,
            alpha0: None,
        }
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, axis) in [
            ("A", &self.impulsive_index),
            ("T", &self.gauss_ratio),
            ("snr_db", &self.snr_db),
        ] {
            if axis.is_empty() {
                return Err(config_error(format!("sweep axis {name} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(config_error(format!("sweep axis {name} has a non-finite value")));
            }
        }
        if let Some(v) = self
            .impulsive_index
            .iter()
            .chain(&self.gauss_ratio)
            .find(|v| **v <= 0.0)
        {
            return Err(config_error(format!("A and T must be positive, got {v}")));
        }
        if !(self.source_power > 0.0 && self.source_power.is_finite()) {
            return Err(config_error(format!(
                "source_power must be positive, got {}",
                self.source_power
            )));
        }
        if self.estimators.is_empty() {
            return Err(config_error("estimator list is empty"));
        }
        if self.criteria.is_empty() {
            return Err(config_error("criteria list is empty"));
        }
        if let Some(grid) = &self.alpha_grid {
            if grid.is_empty() {
                return Err(config_error("alpha_grid is empty"));
            }
            if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
                return Err(config_error(format!("alpha_grid values must be positive, got {a}")));
            }
        }
        if self.n_samples < 2 {
            return Err(config_error(format!(
                "n_samples must be at least 2, got {}",
                self.n_samples
            )));
        }
        if self.truncation == 0 {
            return Err(config_error("truncation must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers must be at least 1"));
        }
        self.solver().validate().map_err(|e| config_error(e.to_string()))
    }

    /// Sweep points in output order: A outermost, then T, then SNR.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &a in &self.impulsive_index {
            for &t in &self.gauss_ratio {
                for &snr in &self.snr_db {
                    points.push(SweepPoint {
                        impulsive_index: a,
                        gauss_ratio: t,
                        snr_db: snr,
                    });
                }
            }
        }
        points
    }

    pub fn scenario(&self, p: &SweepPoint) -> classa_core::Result<Scenario> {
        Scenario::class_a_at_snr_db(
            p.impulsive_index,
            p.gauss_ratio,
            self.source_power,
            p.snr_db,
            self.truncation,
        )
    }

    /// Builds every scenario up front so a bad truncation is reported before
    /// any work is done.
    pub fn scenarios(&self) -> Result<Vec<(SweepPoint, Scenario)>, ConfigError> {
        self.sweep()
            .into_iter()
            .map(|p| {
                let s = self.scenario(&p).map_err(|e| {
                    config_error(format!(
                        "A={} T={} snr_db={}: {e}",
                        p.impulsive_index, p.gauss_ratio, p.snr_db
                    ))
                })?;
                Ok((p, s))
            })
            .collect()
    }
}

/// Parses `start:step:stop` into an inclusive list.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, step, stop] = parts[..] else {
        return Err(config_error(format!("expected start:step:stop, got {spec:?}")));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| config_error(format!("bad number {s:?} in {spec:?}")))
    };
    let (start, step, stop) = (parse(start)?, parse(step)?, parse(stop)?);
    if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
        return Err(config_error(format!(
            "range {spec:?} must have step > 0 and stop >= start"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(spec: &str) -> Result<Vec<f64>, ConfigError> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| config_error(format!("bad number {s:?} in list {spec:?}")))
        })
        .collect()
}
