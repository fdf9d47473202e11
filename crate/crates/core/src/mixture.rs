//! Middleton Class-A noise as a Poisson-weighted Gaussian mixture.
//!
//! Component `m` carries weight `β_m = e^{-A} A^m / m!` and variance
//! `σ_m² = m·σ_I²/A + σ_t²`, where the thermal and impulsive powers split the
//! total noise power as `σ_t² = T/(1+T)·σ_N²` and `σ_I² = σ_N²/(1+T)`.
//! Analytic series keep the first `M` components; the sampler draws from the
//! untruncated model.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TRUNCATION: usize = 50;

/// Largest Poisson mass the analytic series may drop.
pub const MAX_TAIL_MASS: f64 = 1e-10;

/// Stream ids used to separate the noise and source generators under one seed.
const NOISE_STREAM: u64 = 0;
const SOURCE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAParams {
    /// Impulsive index A.
    pub impulsive_index: f64,
    /// Gaussian factor T = σ_t²/σ_I².
    pub gauss_ratio: f64,
    /// Total noise power σ_N².
    pub noise_power: f64,
    /// Number of mixture terms kept by the analytic series.
    pub truncation: usize,
}

impl ClassAParams {
    pub fn new(impulsive_index: f64, gauss_ratio: f64, noise_power: f64, truncation: usize) -> Result<Self> {
        let params = Self {
            impulsive_index,
            gauss_ratio,
            noise_power,
            truncation,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same as [`ClassAParams::new`] with the default truncation of 50 terms.
    pub fn with_default_truncation(impulsive_index: f64, gauss_ratio: f64, noise_power: f64) -> Result<Self> {
        Self::new(impulsive_index, gauss_ratio, noise_power, DEFAULT_TRUNCATION)
    }

    pub fn validate(&self) -> Result<()> {
        positive("impulsive_index", self.impulsive_index)?;
        positive("gauss_ratio", self.gauss_ratio)?;
        positive("noise_power", self.noise_power)?;
        if self.truncation == 0 {
            return Err(invalid("truncation", "must be at least 1"));
        }
        let tail = poisson_tail_mass(self.impulsive_index, self.truncation);
        if tail > MAX_TAIL_MASS {
            return Err(Error::TruncationTooShort {
                truncation: self.truncation,
                tail,
                limit: MAX_TAIL_MASS,
            });
        }
        Ok(())
    }

    pub fn thermal_power(&self) -> f64 {
        self.gauss_ratio / (1.0 + self.gauss_ratio) * self.noise_power
    }

    pub fn impulsive_power(&self) -> f64 {
        self.noise_power / (1.0 + self.gauss_ratio)
    }

    /// Variance of the component with `m` active impulsive sources.
    pub fn component_variance(&self, m: u64) -> f64 {
        m as f64 * self.impulsive_power() / self.impulsive_index + self.thermal_power()
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}

/// Poisson(A) mass at or beyond `m = truncation`, summed directly rather than
/// as `1 - head` so tiny tails keep their relative precision.
pub fn poisson_tail_mass(impulsive_index: f64, truncation: usize) -> f64 {
    let mut weight = (-impulsive_index).exp();
    let mut head = 0.0;
    for m in 0..truncation {
        head += weight;
        weight *= impulsive_index / (m + 1) as f64;
    }
    if (truncation as f64) < impulsive_index + 1.0 {
        // head still short of the mode; direct subtraction is accurate here
        return (1.0 - head).max(0.0);
    }
    let mut tail = 0.0;
    let mut m = truncation;
    while weight > 0.0 && weight > tail * 1e-17 {
        tail += weight;
        m += 1;
        weight *= impulsive_index / m as f64;
    }
    tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    components: Vec<Component>,
    thermal_power: f64,
    impulsive_power: f64,
    tail_mass: f64,
    class_a: Option<ClassAParams>,
}

impl Mixture {
    /// Materializes the first `M` Class-A components.
    pub fn class_a(params: &ClassAParams) -> Result<Self> {
        params.validate()?;
        let a = params.impulsive_index;
        let mut components = Vec::with_capacity(params.truncation);
        let mut weight = (-a).exp();
        for m in 0..params.truncation {
            if weight == 0.0 {
                break;
            }
            components.push(Component {
                weight,
                variance: params.component_variance(m as u64),
            });
            weight *= a / (m + 1) as f64;
        }
        Ok(Self {
            components,
            thermal_power: params.thermal_power(),
            impulsive_power: params.impulsive_power(),
            tail_mass: poisson_tail_mass(a, params.truncation),
            class_a: Some(*params),
        })
    }

    /// A plain Gaussian noise of the given variance, as a one-term mixture.
    pub fn gaussian(variance: f64) -> Result<Self> {
        positive("variance", variance)?;
        Ok(Self {
            components: vec![Component { weight: 1.0, variance }],
            thermal_power: variance,
            impulsive_power: 0.0,
            tail_mass: 0.0,
            class_a: None,
        })
    }

    /// Canonical parameters this mixture was built from, if any.
    pub fn class_a_params(&self) -> Option<&ClassAParams> {
        self.class_a.as_ref()
    }

    /// Sampler for this noise: the untruncated Class-A model when the mixture
    /// came from canonical parameters, the listed components otherwise.
    pub fn sampler(&self) -> NoiseSampler {
        match self.class_a {
            Some(p) => NoiseSampler::ClassA(ClassANoise::new(p)),
            None => NoiseSampler::Finite(self.components.clone()),
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn thermal_power(&self) -> f64 {
        self.thermal_power
    }

    pub fn impulsive_power(&self) -> f64 {
        self.impulsive_power
    }

    /// Nominal σ_N² = σ_t² + σ_I².
    pub fn noise_power(&self) -> f64 {
        self.thermal_power + self.impulsive_power
    }

    /// Weight dropped by truncation, 1 - Σ β_m.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Σ β_m σ_m², which equals σ_N² up to the truncated tail.
    pub fn retained_power(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.variance).sum()
    }

    pub fn max_variance(&self) -> f64 {
        self.components.last().map_or(0.0, |c| c.variance)
    }

    pub fn pdf(&self, n: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (-0.5 * n * n / c.variance).exp() / (2.0 * PI * c.variance).sqrt())
            .sum()
    }
}

/// One mixture branch as seen at the estimator input: `y_m = x + n_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub noise_variance: f64,
    /// σ_{y,m}² = σ_X² + σ_m².
    pub variance: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    source_power: f64,
    mixture: Mixture,
    branches: Vec<Branch>,
}

impl Scenario {
    pub fn new(source_power: f64, mixture: Mixture) -> Result<Self> {
        positive("source_power", source_power)?;
        let branches = mixture
            .components()
            .iter()
            .map(|c| {
                let variance = source_power + c.variance;
                Branch {
                    weight: c.weight,
                    noise_variance: c.variance,
                    variance,
                    std_dev: variance.sqrt(),
                }
            })
            .collect();
        Ok(Self {
            source_power,
            mixture,
            branches,
        })
    }

    /// Builds the Class-A scenario whose total SNR σ_X²/σ_N² is `snr_db`.
    pub fn class_a_at_snr_db(
        impulsive_index: f64,
        gauss_ratio: f64,
        source_power: f64,
        snr_db: f64,
        truncation: usize,
    ) -> Result<Self> {
        let noise_power = source_power / db_to_linear(snr_db);
        let params = ClassAParams::new(impulsive_index, gauss_ratio, noise_power, truncation)?;
        Self::new(source_power, Mixture::class_a(&params)?)
    }

    pub fn source_power(&self) -> f64 {
        self.source_power
    }

    pub fn source_std(&self) -> f64 {
        self.source_power.sqrt()
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn noise_power(&self) -> f64 {
        self.mixture.noise_power()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn tail_mass(&self) -> f64 {
        self.mixture.tail_mass()
    }

    /// Total observation std σ_y = √(σ_X² + σ_N²).
    pub fn observation_std(&self) -> f64 {
        (self.source_power + self.noise_power()).sqrt()
    }

    pub fn snr_tot(&self) -> f64 {
        self.source_power / self.noise_power()
    }

    pub fn snr_tot_db(&self) -> f64 {
        linear_to_db(self.snr_tot())
    }

    /// Density of `y = x + n`.
    pub fn observation_pdf(&self, y: f64) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * (-0.5 * y * y / b.variance).exp() / (2.0 * PI * b.variance).sqrt())
            .sum()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn build_mixture(params: &ClassAParams) -> Result<Mixture> {
    Mixture::class_a(params)
}

pub fn noise_pdf(n: f64, mixture: &Mixture) -> f64 {
    mixture.pdf(n)
}

pub fn observation_pdf(y: f64, scenario: &Scenario) -> f64 {
    scenario.observation_pdf(y)
}

/// Exact Poisson draw by sequential inverse-CDF search.
#[derive(Debug, Clone, Copy)]
pub struct PoissonInverse {
    mean: f64,
    p0: f64,
}

impl PoissonInverse {
    pub fn new(mean: f64) -> Self {
        Self {
            mean,
            p0: (-mean).exp(),
        }
    }

    pub fn quantile(&self, u: f64) -> u64 {
        let mut m = 0u64;
        let mut p = self.p0;
        let mut cdf = p;
        while u > cdf {
            m += 1;
            p *= self.mean / m as f64;
            let next = cdf + p;
            if next == cdf && m as f64 > self.mean {
                // cdf has saturated below u by rounding
                break;
            }
            cdf = next;
        }
        m
    }
}

impl Distribution<u64> for PoissonInverse {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Untruncated Class-A noise sampler: `m ~ Poisson(A)`, then `N(0, σ_m²)`.
#[derive(Debug, Clone, Copy)]
pub struct ClassANoise {
    params: ClassAParams,
    poisson: PoissonInverse,
}

impl ClassANoise {
    pub fn new(params: ClassAParams) -> Self {
        Self {
            params,
            poisson: PoissonInverse::new(params.impulsive_index),
        }
    }

    /// Draws a sample together with its number of active impulsive sources.
    pub fn sample_with_index<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        let m = self.poisson.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        (z * self.params.component_variance(m).sqrt(), m)
    }
}

impl Distribution<f64> for ClassANoise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with_index(rng).0
    }
}

#[derive(Debug, Clone)]
pub enum NoiseSampler {
    ClassA(ClassANoise),
    Finite(Vec<Component>),
}

impl Distribution<f64> for NoiseSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::ClassA(noise) => noise.sample(rng),
            Self::Finite(components) => {
                let mut u = rng.random::<f64>() * components.iter().map(|c| c.weight).sum::<f64>();
                let mut pick = components.last().expect("mixture has components");
                for c in components {
                    if u < c.weight {
                        pick = c;
                        break;
                    }
                    u -= c.weight;
                }
                let z: f64 = StandardNormal.sample(rng);
                z * pick.variance.sqrt()
            }
        }
    }
}

/// Deterministic generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_noise(seed: u64, count: usize, params: &ClassAParams) -> Vec<f64> {
    let noise = ClassANoise::new(*params);
    stream_rng(seed, NOISE_STREAM).sample_iter(noise).take(count).collect()
}

/// Same draws as [`sample_noise`], paired with the number of active sources.
pub fn sample_noise_with_index(seed: u64, count: usize, params: &ClassAParams) -> Vec<(f64, u64)> {
    let noise = ClassANoise::new(*params);
    let mut rng = stream_rng(seed, NOISE_STREAM);
    (0..count).map(|_| noise.sample_with_index(&mut rng)).collect()
}

pub fn sample_source(seed: u64, count: usize, scenario: &Scenario) -> Vec<f64> {
    let std = scenario.source_std();
    stream_rng(seed, SOURCE_STREAM)
        .sample_iter(StandardNormal)
        .take(count)
        .map(|z: f64| z * std)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn factorial(m: u32) -> f64 {
        (1..=m).map(f64::from).product()
    }

    #[test]
    fn first_components_by_hand() {
        let p = ClassAParams::new(0.01, 0.1, 1.0, 50).unwrap();
        let mix = build_mixture(&p).unwrap();
        let c = mix.components();
        assert!((c[0].weight - (-0.01f64).exp()).abs() < 1e-15);
        assert!((c[0].weight - 0.990_050).abs() < 1e-6);
        assert!((c[0].variance - 1.0 / 11.0).abs() < 1e-15);
        assert!((c[1].variance - (100.0 * 10.0 / 11.0 + 1.0 / 11.0)).abs() < 1e-12);
        assert!((c[1].variance - 91.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_split() {
        let p = ClassAParams::new(1.0, 1.0, 2.0, 50).unwrap();
        let mix = build_mixture(&p).unwrap();
        assert_eq!(mix.thermal_power(), 1.0);
        assert_eq!(mix.impulsive_power(), 1.0);
        for (m, c) in mix.components().iter().enumerate() {
            assert!((c.variance - (m as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn recurrence_matches_direct_formula() {
        for a in [0.001, 0.01, 0.1, 1.0, 3.7, 10.0] {
            let p = ClassAParams::new(a, 0.5, 1.0, 80).unwrap();
            let mix = build_mixture(&p).unwrap();
            for m in 0..=30u32 {
                let direct = (-a).exp() * a.powi(m as i32) / factorial(m);
                let got = mix.components()[m as usize].weight;
                assert!(((got - direct) / direct).abs() < 1e-12, "A={a} m={m}");
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ClassAParams::new(0.0, 0.1, 1.0, 50).is_err());
        assert!(ClassAParams::new(0.1, -1.0, 1.0, 50).is_err());
        assert!(ClassAParams::new(0.1, 0.1, f64::NAN, 50).is_err());
        assert!(ClassAParams::new(0.1, 0.1, 1.0, 0).is_err());
        let err = ClassAParams::new(1.0, 0.1, 1.0, 2).unwrap_err();
        assert!(err.to_string().contains("increase M"), "{err}");
        match err {
            Error::TruncationTooShort { tail, .. } => {
                assert!((tail - (1.0 - 2.0 * (-1f64).exp())).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tail_mass_and_bookkeeping() {
        for a in [0.001, 0.01, 0.1, 0.5, 1.0] {
            assert!(poisson_tail_mass(a, 50) < 1e-10);
            for t in [0.01, 0.1, 1.0, 10.0] {
                let mix = build_mixture(&ClassAParams::new(a, t, 3.0, 50).unwrap()).unwrap();
                let w = mix.total_weight();
                assert!((1.0 - 1e-10..=1.0 + 1e-15).contains(&w));
                let rel = mix.retained_power() / 3.0;
                assert!((1.0 - 1e-8..=1.0 + 1e-14).contains(&rel), "A={a} T={t} rel={rel}");
                assert!(mix.components().windows(2).all(|w| w[1].variance > w[0].variance));
            }
        }
    }

    #[test]
    fn gaussian_peak_and_symmetry() {
        let mix = Mixture::gaussian(2.0).unwrap();
        assert!((noise_pdf(0.0, &mix) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let scen = Scenario::new(1.0, Mixture::gaussian(1.0).unwrap()).unwrap();
        assert!((observation_pdf(0.0, &scen) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);

        let ca = build_mixture(&ClassAParams::new(0.01, 0.1, 1.0, 50).unwrap()).unwrap();
        let scen = Scenario::new(1.0, ca.clone()).unwrap();
        for n in [0.1, 0.7, 3.0, 25.0] {
            assert_eq!(noise_pdf(n, &ca), noise_pdf(-n, &ca));
            assert_eq!(observation_pdf(n, &scen), observation_pdf(-n, &scen));
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let ca = build_mixture(&ClassAParams::new(0.01, 0.1, 1.0, 50).unwrap()).unwrap();
        // the m=1 branch has std ≈ 9.5, so [-50, 50] misses ~1.5e-9 of mass
        let r = quad::integrate_with_breaks(&mut |n| ca.pdf(n), &[-50.0, -1.0, 1.0, 50.0], 1e-12, 0.0);
        assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = ClassAParams::new(0.1, 0.1, 1.0, 50).unwrap();
        assert!(sample_noise(7, 0, &p).is_empty());
        assert_eq!(sample_noise(7, 1000, &p), sample_noise(7, 1000, &p));
        assert_ne!(sample_noise(7, 1000, &p), sample_noise(8, 1000, &p));
        // prefix stability
        assert_eq!(sample_noise(7, 10, &p)[..], sample_noise(7, 1000, &p)[..10]);
        let paired: Vec<f64> = sample_noise_with_index(7, 1000, &p)
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(paired, sample_noise(7, 1000, &p));
    }

    #[test]
    fn poisson_quantile_edges() {
        let p = PoissonInverse::new(0.01);
        assert_eq!(p.quantile(0.0), 0);
        assert_eq!(p.quantile(0.99), 0);
        assert_eq!(p.quantile(0.995), 1);
        assert!(p.quantile(1.0) < 100);
    }
}
