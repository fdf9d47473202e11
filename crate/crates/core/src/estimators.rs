//! Pointwise estimator transfer functions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::Scenario;

/// Which estimator to apply to an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Conditional-mean (optimum Bayesian) estimator.
    Obe,
    SoftLimiter(f64),
    /// Blanker; an infinite threshold never blanks.
    Blanker(f64),
    LinearMmse,
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::SoftLimiter(a) | Self::Blanker(a) if a.is_nan() || a <= 0.0 => {
                Err(invalid("alpha", format!("threshold must be positive, got {a}")))
            }
            _ => Ok(()),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            Self::SoftLimiter(a) | Self::Blanker(a) => Some(a),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Obe => "OBE",
            Self::SoftLimiter(_) => "SL",
            Self::Blanker(_) => "BN",
            Self::LinearMmse => "LMMSE",
        }
    }

    /// Binds the estimator to a scenario, precomputing what the per-sample path needs.
    pub fn bind(&self, scenario: &Scenario) -> Result<BoundEstimator> {
        self.validate()?;
        Ok(match *self {
            Self::Obe => BoundEstimator::Obe(ObeEstimator::new(scenario)),
            Self::SoftLimiter(a) => BoundEstimator::SoftLimiter(a),
            Self::Blanker(a) => BoundEstimator::Blanker(a),
            Self::LinearMmse => BoundEstimator::Linear(linear_mmse_gain(scenario)),
        })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.threshold() {
            Some(a) => write!(f, "{}({a})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BoundEstimator {
    Obe(ObeEstimator),
    SoftLimiter(f64),
    Blanker(f64),
    Linear(f64),
}

impl BoundEstimator {
    #[inline]
    pub fn estimate(&self, y: f64) -> f64 {
        match self {
            Self::Obe(obe) => obe.estimate(y),
            Self::SoftLimiter(a) => soft_limit(y, *a),
            Self::Blanker(a) => blank(y, *a),
            Self::Linear(g) => g * y,
        }
    }
}

/// Conditional-mean estimator for a Gaussian source in Gaussian-mixture noise.
///
/// The output is `y` times a convex combination of the per-branch linear gains
/// `σ_X²/σ_{y,m}²`, weighted by `β_m·G(y; σ_{y,m}²)`. Weights are formed in the
/// log domain with the largest exponent factored out, so extreme `|y|` never
/// produces 0/0.
#[derive(Debug, Clone)]
pub struct ObeEstimator {
    // (log of β_m/σ_{y,m}, -1/(2σ_{y,m}²), σ_X²/σ_{y,m}²)
    terms: Vec<(f64, f64, f64)>,
}

impl ObeEstimator {
    pub fn new(scenario: &Scenario) -> Self {
        let sx2 = scenario.source_power();
        let terms = scenario
            .branches()
            .iter()
            .map(|b| (b.weight.ln() - b.std_dev.ln(), -0.5 / b.variance, sx2 / b.variance))
            .collect();
        Self { terms }
    }

    /// `x̂(y)/y`, also well defined at `y = 0`.
    pub fn gain(&self, y: f64) -> f64 {
        let y2 = y * y;
        let max = self
            .terms
            .iter()
            .map(|&(lw, c, _)| lw + c * y2)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for &(lw, c, g) in &self.terms {
            let w = (lw + c * y2 - max).exp();
            num += w * g;
            den += w;
        }
        num / den
    }

    #[inline]
    pub fn estimate(&self, y: f64) -> f64 {
        self.gain(y) * y
    }
}

pub fn obe_estimate(y: f64, scenario: &Scenario) -> f64 {
    ObeEstimator::new(scenario).estimate(y)
}

/// Clips `y` to `[-α, α]`.
#[inline]
pub fn soft_limit(y: f64, alpha: f64) -> f64 {
    y.clamp(-alpha, alpha)
}

/// Passes `y` when `|y| ≤ α`, zero otherwise.
#[inline]
pub fn blank(y: f64, alpha: f64) -> f64 {
    if y.abs() <= alpha {
        y
    } else {
        0.0
    }
}

pub fn linear_mmse_gain(scenario: &Scenario) -> f64 {
    let sx2 = scenario.source_power();
    sx2 / (sx2 + scenario.noise_power())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{ClassAParams, Mixture};
    use crate::quad;

    fn gaussian_scenario(sx2: f64, sn2: f64) -> Scenario {
        Scenario::new(sx2, Mixture::gaussian(sn2).unwrap()).unwrap()
    }

    fn class_a(a: f64, t: f64, sx2: f64, sn2: f64, trunc: usize) -> Scenario {
        let p = ClassAParams::new(a, t, sn2, trunc).unwrap();
        Scenario::new(sx2, Mixture::class_a(&p).unwrap()).unwrap()
    }

    #[test]
    fn nonlinearities() {
        assert_eq!(soft_limit(0.5, 1.0), 0.5);
        assert_eq!(soft_limit(-3.0, 1.0), -1.0);
        assert_eq!(soft_limit(1.3, 1.3), 1.3);
        assert_eq!(blank(0.5, 1.0), 0.5);
        assert_eq!(blank(3.0, 1.0), 0.0);
        assert_eq!(blank(-1.3, 1.3), -1.3);
        assert_eq!(blank(1e300, f64::INFINITY), 1e300);
    }

    #[test]
    fn linear_gain_values() {
        assert_eq!(linear_mmse_gain(&gaussian_scenario(1.0, 1.0)), 0.5);
        assert!((linear_mmse_gain(&gaussian_scenario(10.0, 1.0)) - 10.0 / 11.0).abs() < 1e-15);
        assert!((linear_mmse_gain(&gaussian_scenario(1.0, 1e-12)) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn obe_reduces_to_linear_for_gaussian_noise() {
        let s = gaussian_scenario(1.0, 1.0);
        assert_eq!(obe_estimate(0.0, &s), 0.0);
        assert!((obe_estimate(2.0, &s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn obe_is_odd_and_gain_bounded() {
        let s = class_a(0.01, 0.1, 1.0, 1.0, 50);
        let obe = ObeEstimator::new(&s);
        let sx2 = s.source_power();
        let hi = sx2 / (sx2 + s.mixture().thermal_power());
        let lo = sx2 / (sx2 + s.mixture().max_variance());
        for i in 1..400 {
            let y = i as f64 * 0.25;
            assert_eq!(obe.estimate(-y), -obe.estimate(y));
            let g = obe.estimate(y) / y;
            assert!(g >= lo * (1.0 - 1e-12) && g <= hi * (1.0 + 1e-12), "y={y} g={g}");
        }
        // far tails stay finite
        assert!(obe.estimate(1e6).is_finite());
    }

    #[test]
    fn obe_matches_posterior_mean_quadrature() {
        // x̂(y) = ∫ x f_X(x) f_N(y-x) dx / ∫ f_X(x) f_N(y-x) dx
        let s = class_a(0.001, 1.0, 1.0, 1.0, 50);
        let noise = s.mixture().clone();
        let fx = |x: f64| (-0.5 * x * x).exp();
        for y in [0.5, 1.5, 3.0, 6.0, 20.0] {
            let breaks = [-12.0, y - 4.0, y + 4.0, 12.0];
            let mut breaks = breaks.to_vec();
            breaks.sort_by(f64::total_cmp);
            breaks.retain(|b| (-12.0..=12.0).contains(b));
            let num = quad::integrate_with_breaks(&mut |x| x * fx(x) * noise.pdf(y - x), &breaks, 0.0, 1e-12);
            let den = quad::integrate_with_breaks(&mut |x| fx(x) * noise.pdf(y - x), &breaks, 0.0, 1e-12);
            let oracle = num.value / den.value;
            let got = obe_estimate(y, &s);
            assert!(
                (got - oracle).abs() < 1e-8 * (1.0 + oracle.abs()),
                "y={y}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn obe_high_a_tends_to_linear() {
        // The gain drifts toward σ_X²/(σ_X² + σ_max²) as |y| → ∞ for any finite
        // A, so the comparison covers the bulk of the observations, |y| ≤ 3σ_y.
        let s = class_a(100.0, 1.0, 1.0, 1.0, 300);
        let g = linear_mmse_gain(&s);
        let edge = 3.0 * s.observation_std();
        let worst = (0..=600)
            .map(|i| -edge + i as f64 * edge / 300.0)
            .map(|y| (obe_estimate(y, &s) - g * y).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-2, "worst deviation {worst}");
    }

    #[test]
    fn rejects_nonpositive_threshold() {
        let s = gaussian_scenario(1.0, 1.0);
        assert!(EstimatorKind::SoftLimiter(0.0).bind(&s).is_err());
        assert!(EstimatorKind::Blanker(-1.0).bind(&s).is_err());
        assert!(EstimatorKind::Blanker(f64::INFINITY).bind(&s).is_ok());
    }
}
