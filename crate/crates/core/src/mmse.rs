//! MMSE-optimal soft-limiter and blanker thresholds.
//!
//! Both thresholds solve a fixed-point equation `α = F(α)` obtained by zeroing
//! the derivative of the MSE. The soft-limiter map is a local contraction and is
//! iterated directly; the blanker map is not, so it is solved by the damped
//! update `α ← α + μ(α − F(α))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixture::Scenario;
use crate::special::{erfc, std_normal_cdf};

/// Upper end of the interval on which the soft-limiter MSE is provably convex,
/// in units of σ_X.
pub const SL_CONVEX_LIMIT: f64 = 2.05;

/// Blanker iterates beyond this many σ_y with a growing residual are taken to
/// be running away from a nonexistent finite fixed point.
pub const BN_RUNAWAY_LIMIT: f64 = 100.0;

pub const NEVER_BLANK: &str = "never-blank optimal";
pub const ALWAYS_BLANK: &str = "always-blank optimal";
pub const BUDGET_EXHAUSTED: &str = "iteration budget exhausted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "MMSE")]
    Mmse,
    #[serde(rename = "MSNR")]
    Msnr,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mmse => "MMSE",
            Self::Msnr => "MSNR",
        })
    }
}

/// The two thresholded nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Nonlinearity {
    #[serde(rename = "SL")]
    SoftLimiter,
    #[serde(rename = "BN")]
    Blanker,
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SoftLimiter => "SL",
            Self::Blanker => "BN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute stopping tolerance on |F(α) − α| (or on the bracket width).
    pub epsilon: f64,
    /// Blanker step size.
    pub mu: f64,
    pub n_max: usize,
    pub alpha0: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            mu: 0.01,
            n_max: 10_000,
            alpha0: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(invalid("mu", format!("must lie in (0, 1), got {}", self.mu)));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        if let Some(a) = self.alpha0 {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid("alpha0", format!("must be finite and non-negative, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Optimal threshold, or `+∞` when no finite threshold beats pass-through.
    pub alpha: f64,
    pub criterion: Criterion,
    pub estimator: Nonlinearity,
    pub iterations: usize,
    /// |F(α) − α| at exit for fixed-point solvers, bracket width for bisection.
    pub residual: f64,
    pub converged: bool,
    pub divergence_reason: Option<String>,
    /// Informational remark that does not affect convergence.
    pub note: Option<String>,
}

impl ThresholdResult {
    pub fn is_never_blank(&self) -> bool {
        self.alpha == f64::INFINITY && self.divergence_reason.as_deref() == Some(NEVER_BLANK)
    }
}

/// Soft-limiter fixed-point map
/// `F(α) = 2σ_X² Σ β_m G(α; σ_{y,m}²) / (1 − Σ β_m erf(α/√(2σ_{y,m}²)))`.
///
/// The denominator is formed as `tail + Σ β_m erfc(·)` so it keeps relative
/// precision for large α.
pub fn f_sl_mse(alpha: f64, scenario: &Scenario) -> Result<f64> {
    let mut num = 0.0;
    let mut den = scenario.tail_mass();
    for b in scenario.branches() {
        let u = alpha / b.std_dev;
        num += b.weight * (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * b.std_dev);
        den += b.weight * erfc(u * FRAC_1_SQRT_2);
    }
    if den < 1e-300 {
        return Err(Error::DenominatorUnderflow { alpha });
    }
    Ok(2.0 * scenario.source_power() * num / den)
}

/// Blanker fixed-point map `F(α) = α·G(α)` with
/// `G(α) = Σ β_m 2σ_m² σ_{y,m}^{-3} e^{-α²/2σ_{y,m}²} / Σ β_m σ_{y,m}^{-1} e^{-α²/2σ_{y,m}²}`.
pub fn f_bn_mse(alpha: f64, scenario: &Scenario) -> f64 {
    alpha * bn_gain_ratio(alpha, scenario)
}

/// `G(α) = F_BN(α)/α`, evaluated with the largest exponent factored out.
pub fn bn_gain_ratio(alpha: f64, scenario: &Scenario) -> f64 {
    let a2 = alpha * alpha;
    let log_terms = scenario
        .branches()
        .iter()
        .map(|b| b.weight.ln() - b.std_dev.ln() - 0.5 * a2 / b.variance);
    let max = log_terms.clone().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (b, lt) in scenario.branches().iter().zip(log_terms) {
        let w = (lt - max).exp();
        num += w * 2.0 * b.noise_variance / b.variance;
        den += w;
    }
    num / den
}

/// Second derivative of the soft-limiter MSE,
/// `J''(α) = 4[Σ β_m (1 − Φ(α/σ_{y,m})) − Σ β_m (σ_m²/σ_{y,m}²) α φ(α/σ_{y,m})/σ_{y,m}]`
/// with φ the standard normal density; equals 2 at α = 0.
pub fn j_sl_second_derivative(alpha: f64, scenario: &Scenario) -> f64 {
    let mut tail_prob = scenario.tail_mass();
    let mut kink = 0.0;
    for b in scenario.branches() {
        let u = alpha / b.std_dev;
        tail_prob += b.weight * std_normal_cdf(-u);
        kink += b.weight * (b.noise_variance / b.variance) * u * (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    }
    4.0 * (tail_prob - kink)
}

fn result(
    alpha: f64,
    criterion: Criterion,
    estimator: Nonlinearity,
    iterations: usize,
    residual: f64,
    converged: bool,
) -> ThresholdResult {
    ThresholdResult {
        alpha,
        criterion,
        estimator,
        iterations,
        residual,
        converged,
        divergence_reason: None,
        note: None,
    }
}

/// Direct fixed-point iteration `α_{n+1} = F_SL(α_n)` started from `F_SL(0)`.
pub fn solve_sl_mmse(scenario: &Scenario, config: &SolverConfig) -> Result<ThresholdResult> {
    config.validate()?;
    let limit = SL_CONVEX_LIMIT * scenario.source_std();
    let mut alpha = match config.alpha0 {
        Some(a) if a > limit => {
            return Err(invalid(
                "alpha0",
                format!("soft-limiter start must lie in [0, {limit}] (2.05 σ_X), got {a}"),
            ))
        }
        Some(a) => a,
        None => f_sl_mse(0.0, scenario)?,
    };
    let mut n = 0;
    loop {
        let next = f_sl_mse(alpha, scenario)?;
        let residual = (next - alpha).abs();
        if residual <= config.epsilon {
            return Ok(result(
                alpha,
                Criterion::Mmse,
                Nonlinearity::SoftLimiter,
                n,
                residual,
                true,
            ));
        }
        if n >= config.n_max {
            let mut r = result(alpha, Criterion::Mmse, Nonlinearity::SoftLimiter, n, residual, false);
            r.divergence_reason = Some(BUDGET_EXHAUSTED.into());
            return Ok(r);
        }
        alpha = next;
        n += 1;
    }
}

/// Damped iteration `α_{n+1} = α_n + μ(α_n − F_BN(α_n))` started from σ_X.
///
/// `G` is nondecreasing, so the update walks toward the unique root of `G = 1`
/// when one exists. Iterates that run past 100 σ_y with a growing residual are
/// reported as the never-blank `+∞` sentinel. When `G(0⁺) ≥ 1` there is no
/// nontrivial fixed point either: the MSE grows with α and the iterates shrink
/// toward zero, which is flagged as always-blank.
pub fn solve_bn_mmse(scenario: &Scenario, config: &SolverConfig) -> Result<ThresholdResult> {
    config.validate()?;
    let sigma_y = scenario.observation_std();
    let mut alpha = config.alpha0.unwrap_or_else(|| scenario.source_std());
    if alpha <= 0.0 {
        return Err(invalid("alpha0", "blanker start must be positive"));
    }
    let g0 = bn_gain_ratio(0.0, scenario);
    let flat = scenario.branches().len() == 1 && (g0 - 1.0).abs() <= 1e-12;

    let mut previous = f64::INFINITY;
    let mut n = 0;
    loop {
        let f = f_bn_mse(alpha, scenario);
        let residual = (f - alpha).abs();
        if residual <= config.epsilon {
            let mut r = result(alpha, Criterion::Mmse, Nonlinearity::Blanker, n, residual, true);
            if flat {
                r.note = Some("flat MSE: every threshold is optimal".into());
            } else if g0 >= 1.0 {
                r.note = Some(ALWAYS_BLANK.into());
            }
            return Ok(r);
        }
        if alpha > BN_RUNAWAY_LIMIT * sigma_y && residual > previous {
            let mut r = result(
                f64::INFINITY,
                Criterion::Mmse,
                Nonlinearity::Blanker,
                n,
                residual,
                false,
            );
            r.divergence_reason = Some(NEVER_BLANK.into());
            return Ok(r);
        }
        if n >= config.n_max {
            let mut r = result(alpha, Criterion::Mmse, Nonlinearity::Blanker, n, residual, false);
            r.divergence_reason = Some(BUDGET_EXHAUSTED.into());
            return Ok(r);
        }
        previous = residual;
        alpha += config.mu * (alpha - f);
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{ClassAParams, Mixture};

    fn gaussian(sx2: f64, sn2: f64) -> Scenario {
        Scenario::new(sx2, Mixture::gaussian(sn2).unwrap()).unwrap()
    }

    fn class_a(a: f64, t: f64, snr_db: f64) -> Scenario {
        Scenario::class_a_at_snr_db(a, t, 1.0, snr_db, 50).unwrap()
    }

    #[test]
    fn sl_map_at_zero() {
        let f0 = f_sl_mse(0.0, &gaussian(1.0, 1.0)).unwrap();
        assert!((f0 - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((f0 - 0.56419).abs() < 1e-5);
        for a in [0.001, 0.1, 1.0] {
            let s = class_a(a, 0.1, 0.0);
            let direct: f64 = s
                .branches()
                .iter()
                .map(|b| 2.0 * b.weight / (2.0 * PI * b.variance).sqrt())
                .sum();
            assert!((f_sl_mse(0.0, &s).unwrap() - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn sl_map_guards_underflow() {
        let s = gaussian(1.0, 1.0);
        assert!(matches!(f_sl_mse(60.0, &s), Err(Error::DenominatorUnderflow { .. })));
    }

    #[test]
    fn bn_map_single_component_is_linear() {
        let s = gaussian(1.0, 0.5);
        assert_eq!(f_bn_mse(0.0, &s), 0.0);
        for a in [0.1, 1.0, 7.0] {
            assert!((f_bn_mse(a, &s) - 2.0 * 0.5 / 1.5 * a).abs() < 1e-14);
        }
    }

    #[test]
    fn bn_ratio_tends_to_two() {
        // impulsive component dominating at the edge: σ_1² ≈ 9900 σ_X²
        let s = class_a(0.001, 0.01, -10.0);
        let edge = 20.0 * s.observation_std();
        assert!((bn_gain_ratio(edge, &s) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn second_derivative_at_zero() {
        for a in [0.001, 0.01, 0.1] {
            let s = class_a(a, 1.0, 0.0);
            let v = j_sl_second_derivative(0.0, &s);
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn sl_solver_certificate() {
        for snr in [-10.0, 0.0, 10.0, 20.0] {
            let s = class_a(0.01, 0.1, snr);
            let r = solve_sl_mmse(&s, &SolverConfig::default()).unwrap();
            assert!(r.converged);
            let f = f_sl_mse(r.alpha, &s).unwrap();
            assert!((f - r.alpha).abs() <= 0.01);
            assert_eq!((f - r.alpha).abs(), r.residual);
        }
        let r = solve_sl_mmse(&class_a(0.01, 0.1, 20.0), &SolverConfig::default()).unwrap();
        assert!(r.alpha > 1.0, "alpha {}", r.alpha);
    }

    #[test]
    fn sl_solver_rejects_start_outside_convex_region() {
        let cfg = SolverConfig {
            alpha0: Some(2.5),
            ..Default::default()
        };
        assert!(solve_sl_mmse(&gaussian(1.0, 1.0), &cfg).is_err());
    }

    #[test]
    fn bn_pure_gaussian_never_blanks() {
        let r = solve_bn_mmse(&gaussian(1.0, 0.5), &SolverConfig::default()).unwrap();
        assert!(!r.converged);
        assert!(r.is_never_blank(), "{r:?}");
    }

    #[test]
    fn bn_flat_case() {
        let r = solve_bn_mmse(&gaussian(1.0, 1.0), &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.alpha, 1.0);
        assert!(r.note.is_some());
    }

    #[test]
    fn bn_solver_certificate_and_budget() {
        let s = class_a(0.01, 0.1, 0.0);
        let r = solve_bn_mmse(&s, &SolverConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((f_bn_mse(r.alpha, &s) - r.alpha).abs() <= 0.01);

        let tight = SolverConfig {
            n_max: 3,
            ..Default::default()
        };
        let r = solve_bn_mmse(&s, &tight).unwrap();
        assert!(!r.converged);
        assert_eq!(r.divergence_reason.as_deref(), Some(BUDGET_EXHAUSTED));
    }

    #[test]
    fn bn_large_step_does_not_panic() {
        let cfg = SolverConfig {
            mu: 0.9,
            ..Default::default()
        };
        for (a, t, snr) in [(0.01, 0.1, 0.0), (0.001, 1.0, -10.0), (0.1, 0.01, 10.0)] {
            let r = solve_bn_mmse(&class_a(a, t, snr), &cfg).unwrap();
            assert!(r.converged || r.divergence_reason.is_some());
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            SolverConfig {
                mu: 1.0,
                ..Default::default()
            },
            SolverConfig {
                n_max: 0,
                ..Default::default()
            },
            SolverConfig {
                alpha0: Some(f64::NAN),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let _ = ClassAParams::with_default_truncation(0.1, 0.1, 1.0).unwrap();
    }
}
