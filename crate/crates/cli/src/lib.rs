//! Batch experiment runner for Class-A threshold and performance sweeps.
//!
//! Every subcommand writes plain CSV (or JSON for `validate`) whose bytes
//! depend only on the configuration, seed and worker count.

pub mod config;
pub mod sweep;
pub mod table;
pub mod validate;

use std::io::Write;

use anyhow::Result;
use classa_core::mixture::sample_noise_with_index;

pub use config::{ConfigError, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

/// Raw noise draws for every sweep point: `A,T,snr_tot_db,sigma_n2,index,m,noise`.
pub fn run_sample<W: Write>(config: &ExperimentConfig, out: W) -> Result<()> {
    config.validate()?;
    let scenarios = config.scenarios()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["A", "T", "snr_tot_db", "sigma_n2", "index", "m", "noise"])?;
    for (p, s) in &scenarios {
        let params = s.mixture().class_a_params().expect("sweep scenarios are Class-A");
        let head = [
            table::float(p.impulsive_index),
            table::float(p.gauss_ratio),
            table::float(p.snr_db),
            table::float(s.noise_power()),
        ];
        for (i, (n, m)) in sample_noise_with_index(config.seed, config.n_samples, params)
            .into_iter()
            .enumerate()
        {
            let mut rec = head.to_vec();
            rec.extend([i.to_string(), m.to_string(), table::float(n)]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
