//! MSE and SNR of the estimators: closed forms, Monte Carlo, and the
//! brute-force oracles the threshold solvers are checked against.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{linear_mmse_gain, EstimatorKind};
use crate::mixture::{stream_rng, Scenario};
use crate::mmse::Nonlinearity;
use crate::msnr::{gains, snr_closed_form, SCAN_LIMIT};
use crate::quad;

/// Number of batches (and parallel shards) behind every Monte Carlo estimate.
pub const MC_BATCHES: usize = 100;

/// Monte Carlo shards draw from streams offset past those used by the plain
/// samplers.
const SHARD_STREAM_BASE: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub estimator: EstimatorKind,
    pub alpha: Option<f64>,
    /// Closed-form gain where one exists, Monte Carlo otherwise.
    pub kx: f64,
    pub output_power: f64,
    pub mse_closed: Option<f64>,
    pub snr_closed: Option<f64>,
    pub mse_mc: f64,
    pub mse_mc_se: f64,
    pub kx_mc: f64,
    pub output_power_mc: f64,
    pub snr_mc: f64,
    pub snr_mc_se: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `E{e²} = (1 − 2k_x)σ_X² + E{x̂²}`.
pub fn mse_closed_form(estimator: Nonlinearity, alpha: f64, scenario: &Scenario) -> f64 {
    let g = gains(estimator, alpha, scenario);
    (1.0 - 2.0 * g.kx) * scenario.source_power() + g.output_power
}

/// MSE from the gain and the output SNR, `(1 − k_x)²σ_X² + k_x²σ_X²/SNR`.
pub fn mse_snr_link(kx: f64, snr: f64, scenario: &Scenario) -> f64 {
    let sx2 = scenario.source_power();
    (1.0 - kx) * (1.0 - kx) * sx2 + kx * kx * sx2 / snr
}

/// Closed-form `(k_x, E{x̂²}, MSE, SNR)` for the estimators that have one.
fn closed_form(estimator: &EstimatorKind, scenario: &Scenario) -> Option<(f64, f64, f64, Option<f64>)> {
    let (kx, power) = match *estimator {
        EstimatorKind::Obe => return None,
        EstimatorKind::SoftLimiter(a) => {
            let g = gains(Nonlinearity::SoftLimiter, a, scenario);
            (g.kx, g.output_power)
        }
        EstimatorKind::Blanker(a) => {
            let g = gains(Nonlinearity::Blanker, a, scenario);
            (g.kx, g.output_power)
        }
        EstimatorKind::LinearMmse => {
            let g = linear_mmse_gain(scenario);
            (g, g * g * (scenario.source_power() + scenario.noise_power()))
        }
    };
    let mse = (1.0 - 2.0 * kx) * scenario.source_power() + power;
    Some((kx, power, mse, snr_closed_form(kx, power, scenario).ok()))
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    err2: f64,
    cross: f64,
    source2: f64,
    output2: f64,
}

impl Moments {
    fn merge(mut self, other: &Self) -> Self {
        self.count += other.count;
        self.err2 += other.err2;
        self.cross += other.cross;
        self.source2 += other.source2;
        self.output2 += other.output2;
        self
    }

    fn mse(&self) -> f64 {
        self.err2 / self.count as f64
    }

    fn kx(&self) -> f64 {
        self.cross / self.source2
    }

    /// `k_x² E{x²} / E{(x̂ − k_x x)²}` with the empirical gain.
    fn snr(&self) -> f64 {
        let n = self.count as f64;
        let kx = self.kx();
        let distortion = (self.output2 - 2.0 * kx * self.cross + kx * kx * self.source2) / n;
        kx * kx * (self.source2 / n) / distortion
    }
}

fn standard_error(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Simulates `y = x + n`, applies the estimator and reports empirical MSE and
/// SNR with batch-means standard errors.
///
/// Samples are split into [`MC_BATCHES`] equal batches, each drawn from its own
/// ChaCha stream under `seed`, so the result does not depend on how the batches
/// are scheduled across threads.
pub fn monte_carlo_eval(
    estimator: EstimatorKind,
    scenario: &Scenario,
    n_samples: usize,
    seed: u64,
) -> Result<PerfReport> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples(n_samples));
    }
    let bound = estimator.bind(scenario)?;
    let noise = scenario.mixture().sampler();
    let sx = scenario.source_std();
    let batches = MC_BATCHES.min(n_samples);

    let per_batch: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let count = n_samples / batches + usize::from(b < n_samples % batches);
            let mut rng = stream_rng(seed, SHARD_STREAM_BASE + b as u64);
            let mut m = Moments {
                count,
                ..Default::default()
            };
            for _ in 0..count {
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = sx * z;
                let y = x + noise.sample(&mut rng);
                let xh = bound.estimate(y);
                m.err2 += (x - xh) * (x - xh);
                m.cross += xh * x;
                m.source2 += x * x;
                m.output2 += xh * xh;
            }
            m
        })
        .collect();

    let total = per_batch.iter().fold(Moments::default(), |acc, m| acc.merge(m));
    let mse_mc_se = standard_error(per_batch.iter().map(Moments::mse));
    let snr_mc_se = standard_error(per_batch.iter().map(Moments::snr));
    let kx_mc = total.kx();
    let output_power_mc = total.output2 / total.count as f64;

    let closed = closed_form(&estimator, scenario);
    Ok(PerfReport {
        estimator,
        alpha: estimator.threshold(),
        kx: closed.map_or(kx_mc, |c| c.0),
        output_power: closed.map_or(output_power_mc, |c| c.1),
        mse_closed: closed.map(|c| c.2),
        snr_closed: closed.and_then(|c| c.3),
        mse_mc: total.mse(),
        mse_mc_se,
        kx_mc,
        output_power_mc,
        snr_mc: total.snr(),
        snr_mc_se,
        n_samples,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Mse,
    Snr,
}

/// Where on the scanned interval a grid optimum landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridEdge {
    Interior,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub alpha: f64,
    pub value: f64,
    pub edge: GridEdge,
}

/// Brute-force scan of the closed-form objective over `α ∈ [step, 20σ_y]`:
/// minimum for MSE, maximum for SNR.
pub fn grid_search_alpha(
    estimator: Nonlinearity,
    objective: Objective,
    scenario: &Scenario,
    grid_step: f64,
) -> Result<GridOptimum> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(crate::error::invalid(
            "grid_step",
            format!("must be positive, got {grid_step}"),
        ));
    }
    let upper = SCAN_LIMIT * scenario.observation_std();
    let count = (upper / grid_step).floor() as usize;
    let score = |alpha: f64| match objective {
        Objective::Mse => -mse_closed_form(estimator, alpha, scenario),
        Objective::Snr => {
            let g = gains(estimator, alpha, scenario);
            snr_closed_form(g.kx, g.output_power, scenario).unwrap_or(f64::NEG_INFINITY)
        }
    };
    let count = count.max(1);
    let scores: Vec<f64> = (1..=count).map(|i| score(i as f64 * grid_step)).collect();
    let (mut best, mut value) = (0, f64::NEG_INFINITY);
    for (i, &v) in scores.iter().enumerate() {
        if v > value {
            (best, value) = (i, v);
        }
    }
    // a monotone objective saturates to within rounding of its edge value
    let flat_to_edge = (scores[count - 1] - value).abs() <= 1e-12 * value.abs();
    let edge = if best == 0 {
        GridEdge::Lower
    } else if best == count - 1 || flat_to_edge {
        best = count - 1;
        value = scores[best];
        GridEdge::Upper
    } else {
        GridEdge::Interior
    };
    let best = best + 1;
    Ok(GridOptimum {
        alpha: best as f64 * grid_step,
        value: match objective {
            Objective::Mse => -value,
            Objective::Snr => value,
        },
        edge,
    })
}

/// MSE as the double integral `Σ β_m ∫∫ (x − g(x+n))² f_X(x) G(n; σ_m²) dx dn`
/// over ±12 standard deviations per axis. Independent of the gain formulas,
/// and slow; meant as an oracle.
pub fn mse_quadrature(estimator: Nonlinearity, alpha: f64, scenario: &Scenario) -> f64 {
    const SPAN: f64 = 12.0;
    let sx2 = scenario.source_power();
    let sx = sx2.sqrt();
    let g = |y: f64| match estimator {
        Nonlinearity::SoftLimiter => y.clamp(-alpha, alpha),
        Nonlinearity::Blanker => {
            if y.abs() <= alpha {
                y
            } else {
                0.0
            }
        }
    };
    let norm = |v: f64, var: f64| (-0.5 * v * v / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();

    let mut total = 0.0;
    for c in scenario.mixture().components() {
        if c.weight * (sx2 + c.variance + alpha * alpha) < 1e-14 {
            continue;
        }
        let sn = c.variance.sqrt();
        let mut outer = |x: f64| {
            let mut breaks = vec![-SPAN * sn, SPAN * sn];
            for b in [-alpha - x, alpha - x] {
                if b > -SPAN * sn && b < SPAN * sn {
                    breaks.push(b);
                }
            }
            breaks.sort_by(f64::total_cmp);
            let inner = quad::integrate_with_breaks(
                &mut |n: f64| {
                    let e = x - g(x + n);
                    e * e * norm(n, c.variance)
                },
                &breaks,
                1e-12,
                1e-10,
            );
            inner.value * norm(x, sx2)
        };
        let r = quad::integrate_with_breaks(&mut outer, &[-SPAN * sx, 0.0, SPAN * sx], 1e-10, 1e-9);
        total += c.weight * r.value;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Mixture;

    fn class_a(a: f64, t: f64, snr_db: f64) -> Scenario {
        Scenario::class_a_at_snr_db(a, t, 1.0, snr_db, 50).unwrap()
    }

    #[test]
    fn mse_limits() {
        let s = class_a(0.01, 0.1, 0.0);
        for est in [Nonlinearity::SoftLimiter, Nonlinearity::Blanker] {
            assert!((mse_closed_form(est, 0.0, &s) - 1.0).abs() < 1e-15);
            let far = mse_closed_form(est, 1e6, &s);
            assert!((far / s.noise_power() - 1.0).abs() < 1e-7, "{far}");
        }
    }

    #[test]
    fn link_values() {
        let s = class_a(0.01, 0.1, 0.0);
        assert!((mse_snr_link(1.0, 4.0, &s) - 0.25).abs() < 1e-15);
        assert_eq!(mse_snr_link(0.0, 3.0, &s), 1.0);
    }

    #[test]
    fn link_matches_closed_form() {
        let s = class_a(0.001, 0.1, 0.0);
        for i in 1..100 {
            let a = i as f64 * 0.1;
            let g = gains(Nonlinearity::SoftLimiter, a, &s);
            let snr = snr_closed_form(g.kx, g.output_power, &s).unwrap();
            let mse = mse_closed_form(Nonlinearity::SoftLimiter, a, &s);
            assert!((mse_snr_link(g.kx, snr, &s) / mse - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let s = class_a(0.01, 0.1, 0.0);
        for est in [Nonlinearity::SoftLimiter, Nonlinearity::Blanker] {
            for a in [0.5, 1.4, 3.0] {
                let q = mse_quadrature(est, a, &s);
                let c = mse_closed_form(est, a, &s);
                assert!((q / c - 1.0).abs() < 1e-4, "{est} alpha={a}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn monte_carlo_rejects_tiny_runs() {
        let s = class_a(0.01, 0.1, 0.0);
        assert!(matches!(
            monte_carlo_eval(EstimatorKind::Obe, &s, 1, 0),
            Err(Error::TooFewSamples(1))
        ));
        let r = monte_carlo_eval(EstimatorKind::Obe, &s, 2, 0).unwrap();
        assert_eq!(r.n_samples, 2);
        assert!(r.mse_closed.is_none());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let s = class_a(0.01, 0.1, 0.0);
        let a = monte_carlo_eval(EstimatorKind::SoftLimiter(1.0), &s, 20_000, 5).unwrap();
        let b = monte_carlo_eval(EstimatorKind::SoftLimiter(1.0), &s, 20_000, 5).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| monte_carlo_eval(EstimatorKind::SoftLimiter(1.0), &s, 20_000, 5).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn identity_blanker_error_is_noise() {
        let s = class_a(0.1, 0.1, 0.0);
        let r = monte_carlo_eval(EstimatorKind::Blanker(f64::INFINITY), &s, 200_000, 3).unwrap();
        assert!((r.mse_mc - s.noise_power()).abs() <= 3.0 * r.mse_mc_se, "{r:?}");
        assert!((r.mse_closed.unwrap() - s.noise_power()).abs() < 1e-8);
    }

    #[test]
    fn linear_mmse_closed_form() {
        let s = Scenario::new(2.0, Mixture::gaussian(1.0).unwrap()).unwrap();
        let r = monte_carlo_eval(EstimatorKind::LinearMmse, &s, 1000, 1).unwrap();
        assert!((r.mse_closed.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.snr_closed.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_search_edges() {
        let s = class_a(0.01, 0.1, 0.0);
        let g = grid_search_alpha(Nonlinearity::SoftLimiter, Objective::Mse, &s, 0.01).unwrap();
        assert_eq!(g.edge, GridEdge::Interior);
        assert!(g.value < 1.0 && g.value < s.noise_power());

        let pure = Scenario::new(1.0, Mixture::gaussian(0.5).unwrap()).unwrap();
        let g = grid_search_alpha(Nonlinearity::Blanker, Objective::Mse, &pure, 0.01).unwrap();
        assert_eq!(g.edge, GridEdge::Upper);
        assert!(grid_search_alpha(Nonlinearity::Blanker, Objective::Mse, &pure, 0.0).is_err());
    }
}
