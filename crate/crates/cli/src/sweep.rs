//! Threshold tables and performance curves over the configured sweep.

use anyhow::{Context, Result};
use classa_core::mmse::{solve_bn_mmse, solve_sl_mmse};
use classa_core::msnr::{gains, snr_closed_form, solve_msnr};
use classa_core::performance::{monte_carlo_eval, mse_closed_form};
use classa_core::{Criterion, EstimatorKind, Nonlinearity, PerfReport, Scenario, SolverConfig, ThresholdResult};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepPoint};
use crate::table::{se_to_db, to_db, Row};

pub fn solve(
    estimator: Nonlinearity,
    criterion: Criterion,
    scenario: &Scenario,
    config: &SolverConfig,
) -> classa_core::Result<ThresholdResult> {
    match (criterion, estimator) {
        (Criterion::Mmse, Nonlinearity::SoftLimiter) => solve_sl_mmse(scenario, config),
        (Criterion::Mmse, Nonlinearity::Blanker) => solve_bn_mmse(scenario, config),
        (Criterion::Msnr, _) => solve_msnr(estimator, scenario, config),
    }
}

pub fn estimator_at(estimator: Nonlinearity, alpha: f64) -> EstimatorKind {
    match estimator {
        Nonlinearity::SoftLimiter => EstimatorKind::SoftLimiter(alpha),
        Nonlinearity::Blanker => EstimatorKind::Blanker(alpha),
    }
}

/// Runs `f` on a pool sized from the config.
pub fn with_pool<T: Send>(config: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building worker pool")?;
    Ok(pool.install(f))
}

fn base_row(point: &SweepPoint, s: &Scenario, estimator: impl Into<String>) -> Row {
    Row::new(point, s.noise_power(), s.source_power(), estimator)
}

fn fill_solver(row: &mut Row, result: &classa_core::Result<ThresholdResult>) {
    match result {
        Ok(r) => {
            row.alpha = Some(r.alpha);
            row.iterations = Some(r.iterations);
            row.residual = Some(r.residual);
            row.converged = Some(r.converged);
        }
        Err(_) => row.converged = Some(false),
    }
}

fn fill_closed(row: &mut Row, estimator: Nonlinearity, alpha: f64, s: &Scenario) {
    let g = gains(estimator, alpha, s);
    row.kx = Some(g.kx);
    row.output_power = Some(g.output_power);
    row.mse_closed = Some(mse_closed_form(estimator, alpha, s));
    row.snr_closed_db = snr_closed_form(g.kx, g.output_power, s).ok().map(to_db);
}

fn fill_mc(row: &mut Row, r: &PerfReport) {
    row.alpha = r.alpha.or(row.alpha);
    row.kx = Some(r.kx);
    row.output_power = Some(r.output_power);
    row.mse_closed = r.mse_closed;
    row.snr_closed_db = r.snr_closed.map(to_db);
    row.mse_mc = Some(r.mse_mc);
    row.mse_mc_se = Some(r.mse_mc_se);
    row.snr_mc_db = Some(to_db(r.snr_mc));
    row.snr_mc_se = Some(se_to_db(r.snr_mc, r.snr_mc_se));
    row.n_samples = Some(r.n_samples);
    row.seed = Some(r.seed);
}

/// One row per (A, T, SNR, estimator, criterion). Solver failures become
/// `converged = false` rows; the sweep always completes.
pub fn run_thresholds(config: &ExperimentConfig) -> Result<Vec<Row>> {
    config.validate()?;
    let scenarios = config.scenarios()?;
    let solver = config.solver();
    let jobs: Vec<_> = scenarios
        .iter()
        .flat_map(|(p, s)| {
            config
                .estimators
                .iter()
                .flat_map(move |&e| config.criteria.iter().map(move |&c| (p, s, e, c)))
        })
        .collect();
    let rows = with_pool(config, || {
        jobs.par_iter()
            .map(|&(p, s, est, crit)| {
                let result = solve(est, crit, s, &solver);
                let mut row = base_row(p, s, est.to_string());
                row.criterion = Some(crit.to_string());
                fill_solver(&mut row, &result);
                if let Ok(r) = &result {
                    fill_closed(&mut row, est, r.alpha, s);
                }
                row
            })
            .collect()
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy)]
enum PerfJob {
    /// Fixed threshold from the α grid.
    Grid(Nonlinearity, f64),
    /// Threshold chosen by a criterion.
    Optimal(Nonlinearity, Criterion),
    Obe,
    Linear,
}

/// Closed-form and Monte Carlo performance per scenario.
///
/// With an `alpha_grid` every estimator is evaluated at every grid value;
/// without one, at the threshold each criterion selects. Each scenario also
/// gets an OBE row (Monte Carlo only) and a linear MMSE baseline row. All rows
/// share the configured seed, so rows of one scenario see the same draws.
pub fn run_perf(config: &ExperimentConfig) -> Result<Vec<Row>> {
    config.validate()?;
    let scenarios = config.scenarios()?;
    let solver = config.solver();
    let mut jobs = Vec::new();
    for (p, s) in &scenarios {
        for &e in &config.estimators {
            match &config.alpha_grid {
                Some(grid) => jobs.extend(grid.iter().map(|&a| (p, s, PerfJob::Grid(e, a)))),
                None => jobs.extend(config.criteria.iter().map(|&c| (p, s, PerfJob::Optimal(e, c)))),
            }
        }
        jobs.push((p, s, PerfJob::Obe));
        jobs.push((p, s, PerfJob::Linear));
    }
    let (n, seed) = (config.n_samples, config.seed);
    with_pool(config, || {
        jobs.par_iter()
            .map(|&(p, s, job)| -> Result<Row> {
                let (label, kind, mut row) = match job {
                    PerfJob::Grid(e, a) => (e.to_string(), estimator_at(e, a), None),
                    PerfJob::Optimal(e, c) => {
                        let result = solve(e, c, s, &solver);
                        let mut row = base_row(p, s, e.to_string());
                        row.criterion = Some(c.to_string());
                        fill_solver(&mut row, &result);
                        match result {
                            Ok(r) => (e.to_string(), estimator_at(e, r.alpha), Some(row)),
                            Err(_) => return Ok(row),
                        }
                    }
                    PerfJob::Obe => ("OBE".to_string(), EstimatorKind::Obe, None),
                    PerfJob::Linear => ("LMMSE".to_string(), EstimatorKind::LinearMmse, None),
                };
                let report = monte_carlo_eval(kind, s, n, seed).with_context(|| format!("{kind} at {p:?}"))?;
                let row = row.get_or_insert_with(|| base_row(p, s, label));
                fill_mc(row, &report);
                Ok(row.clone())
            })
            .collect()
    })?
}
