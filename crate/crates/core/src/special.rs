//! Scalar special functions shared by every closed form.
//!
//! `erf`/`erfc` come from `libm` (a port of musl's implementation, accurate to
//! about one ulp), well inside the 1e-12 absolute budget the analytic series need.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Zero-mean Gaussian density with the given variance.
#[inline]
pub fn gaussian_pdf(x: f64, variance: f64) -> f64 {
    (-0.5 * x * x / variance).exp() / (2.0 * PI * variance).sqrt()
}
