//! Partial regression gains, output powers and maximum-SNR thresholds.
//!
//! Every quantity is a β-weighted sum over the virtual Gaussian inputs
//! `y_m = x + n_m ~ N(0, σ_{y,m}²)`, for which the soft limiter and blanker
//! moments are known in closed form:
//!
//! - `k_SL,m = erf(u/√2)`, `u = α/σ_{y,m}`
//! - `k_BN,m = erf(u/√2) − √(2/π)·u·e^{-u²/2}`
//! - `E{x̂_BN²}_m = σ_{y,m}²·k_BN,m`
//! - `E{x̂_SL²}_m = E{x̂_BN²}_m + α²(1 − erf(u/√2))`

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Scenario;
use crate::mmse::{Criterion, Nonlinearity, SolverConfig, ThresholdResult, BUDGET_EXHAUSTED};
use crate::special::{erf, erfc};

/// Grid step, in units of σ_y, of the scan that brackets the MSNR root.
pub const BRACKET_SCAN_STEP: f64 = 0.05;
/// Upper end of every α scan, in units of σ_y.
pub const SCAN_LIMIT: f64 = 20.0;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub kx: f64,
    pub output_power: f64,
}

pub fn kx_sl(alpha: f64, scenario: &Scenario) -> f64 {
    scenario
        .branches()
        .iter()
        .map(|b| b.weight * erf(alpha / b.std_dev * FRAC_1_SQRT_2))
        .sum()
}

/// Bussgang gain of the blanker. The correction term carries `√(2/π)`, the
/// value a Gaussian-input derivation (and the Monte Carlo check in the tests)
/// gives for real-valued signals.
pub fn kx_bn(alpha: f64, scenario: &Scenario) -> f64 {
    scenario
        .branches()
        .iter()
        .map(|b| b.weight * blanker_branch_gain(alpha / b.std_dev))
        .sum()
}

#[inline]
fn blanker_branch_gain(u: f64) -> f64 {
    if u == f64::INFINITY {
        return 1.0;
    }
    erf(u * FRAC_1_SQRT_2) - SQRT_2_OVER_PI * u * (-0.5 * u * u).exp()
}

pub fn output_power_bn(alpha: f64, scenario: &Scenario) -> f64 {
    if alpha == f64::INFINITY {
        return scenario.branches().iter().map(|b| b.weight * b.variance).sum();
    }
    scenario
        .branches()
        .iter()
        .map(|b| b.weight * b.variance * blanker_branch_gain(alpha / b.std_dev))
        .sum()
}

pub fn output_power_sl(alpha: f64, scenario: &Scenario) -> f64 {
    if alpha == f64::INFINITY {
        return output_power_bn(alpha, scenario);
    }
    let clipped: f64 = scenario
        .branches()
        .iter()
        .map(|b| b.weight * erfc(alpha / b.std_dev * FRAC_1_SQRT_2))
        .sum();
    output_power_bn(alpha, scenario) + alpha * alpha * clipped
}

pub fn gains(estimator: Nonlinearity, alpha: f64, scenario: &Scenario) -> GainReport {
    match estimator {
        Nonlinearity::SoftLimiter => GainReport {
            kx: kx_sl(alpha, scenario),
            output_power: output_power_sl(alpha, scenario),
        },
        Nonlinearity::Blanker => GainReport {
            kx: kx_bn(alpha, scenario),
            output_power: output_power_bn(alpha, scenario),
        },
    }
}

/// `SNR = 1/(E{x̂²}/(k_x²σ_X²) − 1)`.
pub fn snr_closed_form(kx: f64, output_power: f64, scenario: &Scenario) -> Result<f64> {
    let useful = kx * kx * scenario.source_power();
    if output_power.is_nan() || output_power <= useful * (1.0 + 1e-12) {
        return Err(Error::DegenerateSnr {
            output_power,
            useful_power: useful,
        });
    }
    Ok(1.0 / (output_power / useful - 1.0))
}

/// Stationarity condition of `log(E{x̂_BN²}/k_BN²)`:
/// `Σ β_m e^{-α²/2σ²}/(√2 σ) / E{x̂²} − Σ √2 β_m e^{-α²/2σ²}/σ³ / k_x`.
///
/// Negative where the SNR increases with α.
pub fn msnr_residual_bn(alpha: f64, scenario: &Scenario) -> f64 {
    let (mut first, mut second) = (0.0, 0.0);
    for b in scenario.branches() {
        let e = b.weight * (-0.5 * alpha * alpha / b.variance).exp();
        first += e / (2f64.sqrt() * b.std_dev);
        second += 2f64.sqrt() * e / (b.variance * b.std_dev);
    }
    first / output_power_bn(alpha, scenario) - second / kx_bn(alpha, scenario)
}

/// Stationarity condition of `log(E{x̂_SL²}/k_SL²)`:
/// `α Σ β_m (1 − erf(α/√2σ)) / E{x̂²} − √(2/π) Σ β_m e^{-α²/2σ²}/σ / k_x`.
pub fn msnr_residual_sl(alpha: f64, scenario: &Scenario) -> f64 {
    let (mut clipped, mut density) = (0.0, 0.0);
    for b in scenario.branches() {
        clipped += b.weight * erfc(alpha / b.std_dev * FRAC_1_SQRT_2);
        density += b.weight * (-0.5 * alpha * alpha / b.variance).exp() / b.std_dev;
    }
    alpha * clipped / output_power_sl(alpha, scenario) - SQRT_2_OVER_PI * density / kx_sl(alpha, scenario)
}

pub fn msnr_residual(estimator: Nonlinearity, alpha: f64, scenario: &Scenario) -> f64 {
    match estimator {
        Nonlinearity::SoftLimiter => msnr_residual_sl(alpha, scenario),
        Nonlinearity::Blanker => msnr_residual_bn(alpha, scenario),
    }
}

/// Fixed-point form of the soft-limiter MSNR condition,
/// `F(α) = E{x̂_SL²}/k_SL · √(2/π) Σ β_m e^{-α²/2σ²}/σ / (1 − Σ β_m erf(α/√2σ))`.
pub fn f_sl_msnr(alpha: f64, scenario: &Scenario) -> Result<f64> {
    let (mut density, mut den) = (0.0, scenario.tail_mass());
    for b in scenario.branches() {
        density += b.weight * (-0.5 * alpha * alpha / b.variance).exp() / b.std_dev;
        den += b.weight * erfc(alpha / b.std_dev * FRAC_1_SQRT_2);
    }
    if den < 1e-300 {
        return Err(Error::DenominatorUnderflow { alpha });
    }
    Ok(output_power_sl(alpha, scenario) / kx_sl(alpha, scenario) * SQRT_2_OVER_PI * density / den)
}

/// Closed-form SNR at threshold α, `None` where it is undefined.
pub fn snr_at(estimator: Nonlinearity, alpha: f64, scenario: &Scenario) -> Option<f64> {
    let g = gains(estimator, alpha, scenario);
    snr_closed_form(g.kx, g.output_power, scenario).ok()
}

/// Brackets the root of the MSNR residual nearest the SNR maximum of a coarse
/// scan over `(0, 20σ_y]`, then bisects to a bracket no wider than ε.
///
/// The residual vanishes trivially at α = 0 and decays to zero in the far
/// tail; anchoring the bracket at the scan maximum keeps both out of reach.
pub fn solve_msnr(estimator: Nonlinearity, scenario: &Scenario, config: &SolverConfig) -> Result<ThresholdResult> {
    config.validate()?;
    let step = BRACKET_SCAN_STEP * scenario.observation_std();
    let count = (SCAN_LIMIT / BRACKET_SCAN_STEP).round() as usize;
    let grid: Vec<f64> = (1..=count).map(|i| i as f64 * step).collect();

    let snr: Vec<f64> = grid
        .iter()
        .map(|&a| snr_at(estimator, a, scenario).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let best = snr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let residual: Vec<f64> = grid.iter().map(|&a| msnr_residual(estimator, a, scenario)).collect();
    let changes_sign = |i: usize| {
        i + 1 < residual.len()
            && residual[i].is_finite()
            && residual[i + 1].is_finite()
            && residual[i] <= 0.0
            && residual[i + 1] >= 0.0
    };

    // nearest bracket to the scan maximum, searching outward
    let bracket = (0..grid.len()).find_map(|d| {
        let below = best.checked_sub(d).filter(|&i| changes_sign(i));
        let above = Some(best + d).filter(|&i| changes_sign(i));
        below.or(above)
    });

    let mut out = ThresholdResult {
        alpha: grid[best],
        criterion: Criterion::Msnr,
        estimator,
        iterations: 0,
        residual: step,
        converged: false,
        divergence_reason: None,
        note: None,
    };
    let Some(i) = bracket else {
        out.divergence_reason = Some("no sign change of the MSNR residual near the SNR maximum".into());
        return Ok(out);
    };

    let (mut lo, mut hi) = (grid[i], grid[i + 1]);
    let mut iterations = 0;
    while hi - lo > config.epsilon {
        if iterations >= config.n_max {
            out.alpha = 0.5 * (lo + hi);
            out.residual = hi - lo;
            out.iterations = iterations;
            out.divergence_reason = Some(BUDGET_EXHAUSTED.into());
            return Ok(out);
        }
        let mid = 0.5 * (lo + hi);
        if msnr_residual(estimator, mid, scenario) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    out.alpha = 0.5 * (lo + hi);
    out.residual = hi - lo;
    out.iterations = iterations;
    out.converged = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Mixture;
    use crate::mmse::f_sl_mse;

    fn class_a(a: f64, t: f64, snr_db: f64) -> Scenario {
        Scenario::class_a_at_snr_db(a, t, 1.0, snr_db, 50).unwrap()
    }

    #[test]
    fn gain_limits() {
        let s = class_a(0.01, 0.1, 0.0);
        assert_eq!(kx_sl(0.0, &s), 0.0);
        assert_eq!(kx_bn(0.0, &s), 0.0);
        assert_eq!(output_power_bn(0.0, &s), 0.0);
        assert_eq!(output_power_sl(0.0, &s), 0.0);
        let far = 1e6;
        assert!((kx_sl(far, &s) - 1.0).abs() < 1e-9);
        assert!((kx_bn(far, &s) - 1.0).abs() < 1e-9);
        let total = s.source_power() + s.noise_power();
        assert!((output_power_bn(far, &s) / total - 1.0).abs() < 1e-8);
        assert!((output_power_sl(far, &s) / total - 1.0).abs() < 1e-8);
        assert!((output_power_sl(f64::INFINITY, &s) / total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn snr_inversion() {
        let s = class_a(0.1, 1.0, 3.0);
        let target = 4.2;
        let p = s.source_power() * (1.0 + 1.0 / target);
        assert!((snr_closed_form(1.0, p, &s).unwrap() - target).abs() < 1e-12);
        assert!(snr_closed_form(1.0, s.source_power(), &s).is_err());
        assert!(snr_closed_form(0.0, 0.0, &s).is_err());
    }

    #[test]
    fn identity_limit_snr_is_snr_tot() {
        let s = class_a(0.01, 0.1, 7.0);
        let snr = snr_at(Nonlinearity::SoftLimiter, 1e5, &s).unwrap();
        assert!((snr / s.snr_tot() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn orderings_on_dense_grid() {
        for (a, t, snr) in [(0.001, 0.01, -10.0), (0.01, 0.1, 0.0), (0.1, 1.0, 10.0)] {
            let s = class_a(a, t, snr);
            let mut prev = 0.0;
            for i in 0..=4000 {
                let alpha = i as f64 * 0.01;
                let ks = kx_sl(alpha, &s);
                assert!(kx_bn(alpha, &s) <= ks + 1e-15);
                assert!(output_power_bn(alpha, &s) <= output_power_sl(alpha, &s) + 1e-15);
                assert!(ks >= prev - 1e-15);
                assert!((0.0..=1.0).contains(&ks));
                prev = ks;
            }
        }
    }

    #[test]
    fn sl_msnr_map_is_scaled_mmse_map() {
        for (a, t, snr) in [(0.001, 0.01, -10.0), (0.01, 0.1, 0.0), (0.1, 1.0, 10.0)] {
            let s = class_a(a, t, snr);
            for i in 1..200 {
                let alpha = i as f64 * 0.05;
                let lhs = f_sl_msnr(alpha, &s).unwrap();
                let rhs =
                    output_power_sl(alpha, &s) / (s.source_power() * kx_sl(alpha, &s)) * f_sl_mse(alpha, &s).unwrap();
                assert!(((lhs - rhs) / rhs).abs() < 1e-9, "alpha={alpha}");
            }
        }
    }

    #[test]
    fn residual_sign_tracks_snr_slope() {
        // residual < 0 where the closed-form SNR increases with α
        let s = class_a(0.01, 0.1, 0.0);
        for est in [Nonlinearity::SoftLimiter, Nonlinearity::Blanker] {
            for i in 2..300 {
                let a = i as f64 * 0.02;
                let h = 1e-5;
                let slope = snr_at(est, a + h, &s).unwrap() - snr_at(est, a - h, &s).unwrap();
                let r = msnr_residual(est, a, &s);
                if slope.abs() > 1e-9 && r.abs() > 1e-9 {
                    assert_eq!(slope > 0.0, r < 0.0, "{est} alpha={a}");
                }
            }
        }
    }

    #[test]
    fn solver_finds_interior_maximum() {
        let s = class_a(0.01, 0.1, 0.0);
        for est in [Nonlinearity::SoftLimiter, Nonlinearity::Blanker] {
            let r = solve_msnr(est, &s, &SolverConfig::default()).unwrap();
            assert!(r.converged, "{r:?}");
            assert!(r.residual <= 0.01);
            let peak = snr_at(est, r.alpha, &s).unwrap();
            for d in [-0.05, 0.05] {
                assert!(snr_at(est, r.alpha + d, &s).unwrap() <= peak + 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_noise_blanker_has_no_finite_msnr_root() {
        let s = Scenario::new(1.0, Mixture::gaussian(0.5).unwrap()).unwrap();
        let r = solve_msnr(Nonlinearity::Blanker, &s, &SolverConfig::default()).unwrap();
        assert!(!r.converged);
        assert!(r.divergence_reason.is_some());
    }
}
