//! Seeded random streams and the distribution samplers built on them.
//!
//! The bit source is ChaCha20 (a counter-based stream cipher) keyed through
//! `seed_from_u64`. Uniforms take the top 53 bits of each 64-bit output.
//! Samplers are implemented here rather than delegated so the exact
//! algorithm is pinned:
//!
//! * normal: Marsaglia polar method, the spare deviate is cached;
//! * gamma: Marsaglia–Tsang squeeze, with the `U^(1/k)` boost for `k < 1`;
//! * beta: `G1 / (G1 + G2)` from two gamma draws;
//! * log-normal: `exp` of a standard normal.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Result, StatsError};
use crate::linalg::Matrix;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha20Rng,
    seed: u64,
    spare_normal: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            seed,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    /// Uniform integer in `0..n` by rejection (no modulo bias). `n` must be > 0.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * k);
                return u * k;
            }
        }
    }

    /// Gamma(shape, 1) deviate.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(StatsError::Domain(format!("gamma shape must be > 0, got {shape}")));
        }
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0)?;
            return Ok(g * self.uniform_open().powf(1.0 / shape));
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let (x, v) = loop {
                let x = self.standard_normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = self.uniform_open();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return Ok(d * v);
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return Ok(d * v);
            }
        }
    }

    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(StatsError::Domain(format!("beta parameters must be > 0, got ({a}, {b})")));
        }
        let x = self.gamma(a)?;
        let y = self.gamma(b)?;
        Ok(x / (x + y))
    }
}

/// `rows x cols` matrix of i.i.d. Gaussian draws, filled row-major.
/// `sd` is the standard deviation, not the variance.
pub fn sample_normal(rng: &mut SimRng, mean: f64, sd: f64, rows: usize, cols: usize) -> Result<Matrix> {
    if !(sd > 0.0 && sd.is_finite()) || !mean.is_finite() {
        return Err(StatsError::Domain(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})")));
    }
    let data = (0..rows * cols).map(|_| mean + sd * rng.standard_normal()).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Standard log-normal draws (`exp(Z)`, `Z ~ N(0, 1)`).
pub fn sample_lognormal(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal().exp()).collect()
}

pub fn sample_beta(rng: &mut SimRng, a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| rng.beta(a, b)).collect()
}
