//! Gaussian kernel density estimation with bandwidth chosen by a random
//! train/held-out split.

use crate::error::{Result, StatsError};
use crate::rng::SimRng;
use crate::special::normal_pdf;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    train: Vec<f64>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn fit(train: &[f64], bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(StatsError::Domain(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        if train.is_empty() {
            return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
        }
        Ok(Self { train: train.to_vec(), bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn train(&self) -> &[f64] {
        &self.train
    }

    /// `f̂(x) = 1/(n h) Σ φ((x - xᵢ)/h)`.
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self.train.iter().map(|xi| normal_pdf((x - xi) / h)).sum();
        s / (self.train.len() as f64 * h)
    }

    /// Sum of `ln f̂` over `points`; `-inf` if any point has zero density.
    pub fn log_likelihood(&self, points: &[f64]) -> f64 {
        points.iter().map(|&x| self.pdf(x).ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection {
    /// Refit on the full data at the chosen bandwidth.
    pub model: KdeModel,
    pub held_out_log_likelihood: f64,
    /// Every candidate scored `-inf`; the widest bandwidth was taken.
    pub degenerate: bool,
}

/// Silverman's rule of thumb `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
///
/// Falls back to whichever spread measure is positive, and to 1 for
/// constant data.
pub fn silverman_bandwidth(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let sd = crate::sample_sd(data);
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return 1.0,
    };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 30 log-spaced candidates on `[0.3 h_s, 3 h_s]`, `h_s` from
/// [`silverman_bandwidth`].
pub fn default_bandwidth_grid(data: &[f64]) -> Vec<f64> {
    log_spaced(0.3 * silverman_bandwidth(data), 3.0 * silverman_bandwidth(data), 30)
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Pick the bandwidth maximizing held-out log-likelihood.
///
/// The data are permuted with `rng`; the first half trains a KDE for each
/// candidate and the second half scores it. Ties go to the earlier
/// candidate. The winner is refit on all of `data`.
pub fn select_bandwidth(data: &[f64], rng: &mut SimRng, grid: &[f64]) -> Result<BandwidthSelection> {
    if data.len() < 4 {
        return Err(StatsError::TooFewObservations { needed: 4, got: data.len() });
    }
    if grid.is_empty() {
        return Err(StatsError::Domain("empty bandwidth grid".into()));
    }
    if let Some(h) = grid.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(StatsError::Domain(format!("bandwidth candidates must be > 0, got {h}")));
    }
    let mut shuffled = data.to_vec();
    rng.shuffle(&mut shuffled);
    let (train, held_out) = shuffled.split_at(data.len() / 2);

    let mut best: Option<(f64, f64)> = None;
    for &h in grid {
        let ll = KdeModel::fit(train, h)?.log_likelihood(held_out);
        if ll.is_nan() || ll == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((h, ll));
        }
    }
    match best {
        Some((h, ll)) => Ok(BandwidthSelection {
            model: KdeModel::fit(data, h)?,
            held_out_log_likelihood: ll,
            degenerate: false,
        }),
        None => {
            let widest = grid.iter().copied().fold(f64::MIN, f64::max);
            Ok(BandwidthSelection {
                model: KdeModel::fit(data, widest)?,
                held_out_log_likelihood: f64::NEG_INFINITY,
                degenerate: true,
            })
        }
    }
}
