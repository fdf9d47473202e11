//! CSV rows with a fixed column order and fixed-width float formatting.

use std::io::Write;

use crate::config::SweepPoint;

pub const COLUMNS: [&str; 21] = [
    "A",
    "T",
    "sigma_n2",
    "sigma_x2",
    "snr_tot_db",
    "estimator",
    "criterion",
    "alpha",
    "kx",
    "output_power",
    "mse_closed",
    "snr_closed_db",
    "mse_mc",
    "mse_mc_se",
    "snr_mc_db",
    "snr_mc_se",
    "n_samples",
    "seed",
    "iterations",
    "residual",
    "converged",
];

/// One output row; `None` fields are written empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row {
    pub impulsive_index: f64,
    pub gauss_ratio: f64,
    pub noise_power: f64,
    pub source_power: f64,
    pub snr_tot_db: f64,
    pub estimator: String,
    pub criterion: Option<String>,
    pub alpha: Option<f64>,
    pub kx: Option<f64>,
    pub output_power: Option<f64>,
    pub mse_closed: Option<f64>,
    pub snr_closed_db: Option<f64>,
    pub mse_mc: Option<f64>,
    pub mse_mc_se: Option<f64>,
    pub snr_mc_db: Option<f64>,
    /// Standard error of `snr_mc_db`, in dB.
    pub snr_mc_se: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub converged: Option<bool>,
}

impl Row {
    pub fn new(point: &SweepPoint, noise_power: f64, source_power: f64, estimator: impl Into<String>) -> Self {
        Self {
            impulsive_index: point.impulsive_index,
            gauss_ratio: point.gauss_ratio,
            noise_power,
            source_power,
            snr_tot_db: point.snr_db,
            estimator: estimator.into(),
            ..Default::default()
        }
    }

    pub fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
        let int = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            float(self.impulsive_index),
            float(self.gauss_ratio),
            float(self.noise_power),
            float(self.source_power),
            float(self.snr_tot_db),
            self.estimator.clone(),
            self.criterion.clone().unwrap_or_default(),
            opt(self.alpha),
            opt(self.kx),
            opt(self.output_power),
            opt(self.mse_closed),
            opt(self.snr_closed_db),
            opt(self.mse_mc),
            opt(self.mse_mc_se),
            opt(self.snr_mc_db),
            opt(self.snr_mc_se),
            int(self.n_samples),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            int(self.iterations),
            opt(self.residual),
            self.converged.map(|c| c.to_string()).unwrap_or_default(),
        ]
    }
}

/// Twelve significant digits in scientific notation.
pub fn float(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Delta-method standard error of `10·log10(x)`.
pub fn se_to_db(linear: f64, se: f64) -> f64 {
    10.0 / std::f64::consts::LN_10 * se / linear
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}
