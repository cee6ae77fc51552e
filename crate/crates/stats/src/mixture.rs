//! Beta mixture densities and integrated squared loss on `[0, 1]`.

use crate::error::{Result, StatsError};
use crate::rng::SimRng;
use crate::special::ln_beta;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaComponent {
    pub alpha: f64,
    pub beta: f64,
    pub weight: f64,
}

impl BetaComponent {
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        // powf keeps 0^0 = 1 at the endpoints where a log form gives NaN.
        x.powf(self.alpha - 1.0) * (1.0 - x).powf(self.beta - 1.0) * (-ln_beta(self.alpha, self.beta)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaMixture {
    components: Vec<BetaComponent>,
}

impl BetaMixture {
    pub fn new(components: Vec<BetaComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(StatsError::Domain("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.alpha > 0.0 && c.beta > 0.0 && c.weight > 0.0) {
                return Err(StatsError::Domain(format!("invalid beta component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(StatsError::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// The four-component target of the density study:
    /// 0.2·Beta(1.3, 1.3) + 0.25·Beta(1.1, 3) + 0.35·Beta(5, 1) + 0.2·Beta(1.5, 4).
    pub fn density_study_target() -> Self {
        let c = |alpha, beta, weight| BetaComponent { alpha, beta, weight };
        Self::new(vec![c(1.3, 1.3, 0.2), c(1.1, 3.0, 0.25), c(5.0, 1.0, 0.35), c(1.5, 4.0, 0.2)])
            .expect("static mixture is valid")
    }

    pub fn components(&self) -> &[BetaComponent] {
        &self.components
    }

    /// Density; zero outside `[0, 1]`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(x)).sum()
    }

    pub fn sample(&self, rng: &mut SimRng, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut chosen = self.components.last().expect("non-empty");
                for c in &self.components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                rng.beta(chosen.alpha, chosen.beta)
            })
            .collect()
    }
}

/// Composite trapezoid rule with `points` equally spaced nodes on `[a, b]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    assert!(points >= 2, "trapezoid needs at least two nodes");
    let step = (b - a) / (points - 1) as f64;
    let inner: f64 = (1..points - 1).map(|i| f(a + step * i as f64)).sum();
    step * (0.5 * (f(a) + f(b)) + inner)
}

pub const MIN_LOSS_GRID: usize = 512;

/// `∫₀¹ (f(x) - f̂(x))² dx` by the composite trapezoid rule on `grid_points`
/// nodes (at least 512).
pub fn integrated_squared_loss(
    f_true: impl Fn(f64) -> f64,
    f_hat: impl Fn(f64) -> f64,
    grid_points: usize,
) -> Result<f64> {
    if grid_points < MIN_LOSS_GRID {
        return Err(StatsError::Domain(format!(
            "loss grid needs at least {MIN_LOSS_GRID} points, got {grid_points}"
        )));
    }
    Ok(trapezoid(
        |x| {
            let d = f_true(x) - f_hat(x);
            d * d
        },
        0.0,
        1.0,
        grid_points,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_one() {
        let c = |w| BetaComponent { alpha: 2.0, beta: 2.0, weight: w };
        assert!(BetaMixture::new(vec![c(0.5), c(0.4)]).is_err());
        assert!(BetaMixture::new(vec![c(0.5), c(0.5)]).is_ok());
        assert!(BetaMixture::new(vec![]).is_err());
        assert!(BetaMixture::new(vec![BetaComponent { alpha: 0.0, beta: 1.0, weight: 1.0 }]).is_err());
    }

    #[test]
    fn pdf_outside_support_is_zero() {
        let m = BetaMixture::density_study_target();
        assert_eq!(m.pdf(-0.1), 0.0);
        assert_eq!(m.pdf(1.0001), 0.0);
        assert!(m.pdf(1.0).is_finite());
        assert!(m.pdf(0.0).is_finite());
    }

    #[test]
    fn uniform_component_pdf() {
        let c = BetaComponent { alpha: 1.0, beta: 1.0, weight: 1.0 };
        assert!((c.pdf(0.3) - 1.0).abs() < 1e-14);
        let c = BetaComponent { alpha: 5.0, beta: 1.0, weight: 1.0 };
        assert!((c.pdf(1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_integrates_to_one() {
        let m = BetaMixture::density_study_target();
        let total = trapezoid(|x| m.pdf(x), 0.0, 1.0, 200_001);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn isl_identity_is_zero() {
        let m = BetaMixture::density_study_target();
        assert_eq!(integrated_squared_loss(|x| m.pdf(x), |x| m.pdf(x), 2048).unwrap(), 0.0);
        assert!(integrated_squared_loss(|x| m.pdf(x), |_| 1.0, 100).is_err());
    }

    #[test]
    fn samples_in_unit_interval() {
        let m = BetaMixture::density_study_target();
        let xs = m.sample(&mut SimRng::new(4), 20_000).unwrap();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        // mixture mean = Σ w a/(a+b)
        let expected: f64 = m.components().iter().map(|c| c.weight * c.alpha / (c.alpha + c.beta)).sum();
        assert!((crate::mean(&xs) - expected).abs() < 0.01);
    }
}
