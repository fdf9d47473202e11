//! Estimation of a Gaussian source observed in Middleton Class-A impulsive
//! noise.
//!
//! The crate covers the conditional-mean (optimum Bayesian) estimator, soft
//! limiter and blanker estimators with MMSE- and maximum-SNR-optimal
//! thresholds, closed-form MSE/SNR of the thresholded estimators and a
//! deterministic parallel Monte Carlo harness to check them against.
//!
//! ```
//! use classa_core::{mixture::Scenario, mmse::{solve_sl_mmse, SolverConfig}, performance};
//! use classa_core::mmse::Nonlinearity;
//!
//! // A = 0.01, T = 0.1, σ_X² = 1 at 0 dB total SNR
//! let scenario = Scenario::class_a_at_snr_db(0.01, 0.1, 1.0, 0.0, 50).unwrap();
//! let sl = solve_sl_mmse(&scenario, &SolverConfig::default()).unwrap();
//! assert!(sl.converged);
//! let mse = performance::mse_closed_form(Nonlinearity::SoftLimiter, sl.alpha, &scenario);
//! assert!(mse < scenario.noise_power());
//! ```

pub mod error;
pub mod estimators;
pub mod mixture;
pub mod mmse;
pub mod msnr;
pub mod performance;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use estimators::EstimatorKind;
pub use mixture::{ClassAParams, Mixture, Scenario};
pub use mmse::{Criterion, Nonlinearity, SolverConfig, ThresholdResult};
pub use performance::PerfReport;
