//! Linear regression with intercept: ordinary least squares and the lasso.

use crate::error::{Result, StatsError};
use crate::linalg::{lstsq_qr, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.mul_vec(&self.coefficients)?.into_iter().map(|v| v + self.intercept).collect())
    }

    /// Predict and score against `y` with [`r2_score`].
    pub fn score(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        let pred = self.predict(x)?;
        r2_score(y, &pred)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub model: LinearModel,
    /// `false` when the sweep limit was hit before the tolerance; the model
    /// is then the last iterate.
    pub converged: bool,
    pub sweeps: usize,
}

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(StatsError::Shape(format!("X has {} rows but y has {} values", x.rows(), y.len())));
    }
    if x.rows() == 0 {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    Ok(())
}

/// Column means of `x` and the centered columns (column-major).
fn center(x: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.rows() as f64;
    (0..x.cols())
        .map(|j| {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            (m, col.into_iter().map(|v| v - m).collect())
        })
        .unzip()
}

/// Ordinary least squares with an unpenalized intercept, solved by QR on
/// the centered design.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    check_xy(x, y)?;
    if x.rows() <= x.cols() {
        return Err(StatsError::TooFewObservations { needed: x.cols() + 1, got: x.rows() });
    }
    let (x_mean, cols) = center(x);
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for i in 0..x.rows() {
        data.extend(cols.iter().map(|c| c[i]));
    }
    let xc = Matrix::from_vec(x.rows(), x.cols(), data)?;
    let coefficients = lstsq_qr(&xc, &yc)?;
    let intercept = y_mean - x_mean.iter().zip(&coefficients).map(|(m, b)| m * b).sum::<f64>();
    Ok(LinearModel { coefficients, intercept })
}

/// Lasso with unpenalized intercept, minimizing
/// `(1 / (2n)) ‖y - Xw - b‖² + alpha ‖w‖₁`.
///
/// Cyclic coordinate descent on centered columns rescaled to unit mean
/// square; in those coordinates the per-column threshold is
/// `alpha / scale_j`, which keeps the objective on the original scale.
/// Stops when the largest coefficient change in a sweep (original scale)
/// drops below `1e-7`, or after `10⁴` sweeps.
pub fn lasso_fit(x: &Matrix, y: &[f64], alpha: f64) -> Result<LassoFit> {
    check_xy(x, y)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(StatsError::Domain(format!("lasso alpha must be >= 0, got {alpha}")));
    }
    let n = x.rows() as f64;
    let p = x.cols();
    let (x_mean, mut cols) = center(x);
    let y_mean = y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let scales: Vec<f64> = cols
        .iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt())
        .collect();
    for (c, &s) in cols.iter_mut().zip(&scales) {
        if s > 0.0 {
            c.iter_mut().for_each(|v| *v /= s);
        }
    }

    // Coefficients in standardized coordinates.
    let mut w = vec![0.0; p];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if scales[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n + w[j];
            let updated = soft_threshold(rho, alpha / scales[j]);
            let delta = updated - w[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                w[j] = updated;
                max_change = max_change.max((delta / scales[j]).abs());
            }
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }

    let coefficients: Vec<f64> = w
        .iter()
        .zip(&scales)
        .map(|(wj, &s)| if s > 0.0 { wj / s } else { 0.0 })
        .collect();
    let intercept = y_mean - x_mean.iter().zip(&coefficients).map(|(m, b)| m * b).sum::<f64>();
    Ok(LassoFit { model: LinearModel { coefficients, intercept }, converged, sweeps })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Value of the lasso objective at `model`.
pub fn lasso_objective(x: &Matrix, y: &[f64], model: &LinearModel, alpha: f64) -> Result<f64> {
    let pred = model.predict(x)?;
    let rss: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = model.coefficients.iter().map(|w| w.abs()).sum();
    Ok(rss / (2.0 * y.len() as f64) + alpha * l1)
}

/// Largest violation of the lasso subgradient conditions at `model`:
/// `|gⱼ - alpha·sign(wⱼ)|` for active coordinates, `max(|gⱼ| - alpha, 0)`
/// otherwise, where `gⱼ = xⱼᵀ(y - Xw - b) / n`.
pub fn lasso_kkt_residual(x: &Matrix, y: &[f64], model: &LinearModel, alpha: f64) -> Result<f64> {
    let pred = model.predict(x)?;
    let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let n = y.len() as f64;
    let mut worst = 0.0f64;
    for (j, &wj) in model.coefficients.iter().enumerate() {
        let g = (0..x.rows()).map(|i| x.get(i, j) * resid[i]).sum::<f64>() / n;
        let v = if wj != 0.0 {
            (g - alpha * wj.signum()).abs()
        } else {
            (g.abs() - alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Coefficient of determination `1 - Σ(y - ŷ)² / Σ(y - ȳ)²`.
///
/// A constant `y_true` scores 1 when predicted exactly and 0 otherwise.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(StatsError::Shape(format!(
            "{} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    let m = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    let ss_tot: f64 = y_true.iter().map(|a| (a - m) * (a - m)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - ss_res / ss_tot)
}
