//! Numerical kernel used by the simulation studies.
//!
//! Everything here is a pure function of its inputs plus an explicit
//! [`SimRng`]; nothing reads global state, so a replication is fully
//! determined by its seed.

pub mod error;
pub mod kde;
pub mod linalg;
pub mod mixture;
pub mod regression;
pub mod rng;
pub mod special;
pub mod twosample;

pub use error::StatsError;
pub use kde::{select_bandwidth, silverman_bandwidth, BandwidthSelection, KdeModel};
pub use linalg::Matrix;
pub use mixture::{integrated_squared_loss, trapezoid, BetaComponent, BetaMixture};
pub use regression::{lasso_fit, ols_fit, r2_score, LassoFit, LinearModel};
pub use rng::SimRng;
pub use twosample::{ks_test, mann_whitney_test, welch_t_test, TestResult};

/// Arithmetic mean. Returns NaN for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator (two-pass).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}
