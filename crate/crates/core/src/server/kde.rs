//! Gaussian kernel density estimate over transition times (seconds).

use serde::{Deserialize, Serialize};
use thiserror::Error;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KdeError {
    #[error("kde needs at least one sample")]
    Empty,
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("non-finite sample")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
}

pub fn gaussian_kernel(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

pub fn fit_kde(samples: &[f64], bandwidth: f64) -> Result<Kde, KdeError> {
    Kde::new(samples.to_vec(), bandwidth)
}

impl Kde {
    pub fn new(samples: Vec<f64>, bandwidth: f64) -> Result<Self, KdeError> {
        if samples.is_empty() {
            return Err(KdeError::Empty);
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(KdeError::Bandwidth(bandwidth));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(KdeError::NonFinite);
        }
        Ok(Self { samples, bandwidth })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `1/(n h) * sum K((t - tau) / h)`
    pub fn eval(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .samples
            .iter()
            .map(|&s| gaussian_kernel((t - s) / h))
            .sum();
        sum / (self.samples.len() as f64 * h)
    }

    /// Mean of the density; the Gaussian kernel is symmetric so this is the sample mean.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Interval holding all but a negligible tail of the mass.
    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        (lo - 6.0 * self.bandwidth, hi + 6.0 * self.bandwidth)
    }

    /// Composite Simpson integral of the density over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let steps = (((b - a) / (self.bandwidth / 8.0)).ceil() as usize).clamp(8, 100_000);
        let n = steps + steps % 2;
        let dx = (b - a) / n as f64;
        let mut acc = self.eval(a) + self.eval(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.eval(a + i as f64 * dx);
        }
        acc * dx / 3.0
    }
}

/// Silverman's rule of thumb, `1.06 * sd * n^(-1/5)`; `None` for degenerate samples.
pub fn silverman_bandwidth(samples: &[f64]) -> Option<f64> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    (h > 0.0 && h.is_finite()).then_some(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let k = fit_kde(&[10.0], 5.0).unwrap();
        assert!((k.eval(10.0) - 0.079_788_456_080_286_5).abs() < 1e-12);
        assert!(
            (k.eval(15.0) - (-0.5f64).exp() / (5.0 * (2.0 * std::f64::consts::PI).sqrt())).abs()
                < 1e-12
        );
        let k = fit_kde(&[8.0, 12.0], 5.0).unwrap();
        let expected = 2.0 * (-0.08f64).exp() / (2.0 * 5.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((k.eval(10.0) - expected).abs() < 1e-12);
        assert!((k.eval(10.0) - 0.0736540).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(fit_kde(&[], 5.0), Err(KdeError::Empty));
        assert_eq!(fit_kde(&[1.0], 0.0), Err(KdeError::Bandwidth(0.0)));
        assert_eq!(fit_kde(&[1.0], -1.0), Err(KdeError::Bandwidth(-1.0)));
        assert_eq!(fit_kde(&[f64::NAN], 1.0), Err(KdeError::NonFinite));
    }

    #[test]
    fn tails_vanish() {
        let k = fit_kde(&[10.0, 20.0], 5.0).unwrap();
        assert!(k.eval(1e6) < 1e-300 && k.eval(-1e6) < 1e-300);
    }

    #[test]
    fn silverman_matches_formula() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((silverman_bandwidth(&s).unwrap() - 1.06 * sd * 4f64.powf(-0.2)).abs() < 1e-12);
        assert_eq!(silverman_bandwidth(&[3.0, 3.0]), None);
    }

    proptest! {
        #[test]
        fn integrates_to_one(samples in prop::collection::vec(0.0..60.0f64, 1..30), h in 0.2..8.0f64) {
            let k = fit_kde(&samples, h).unwrap();
            let (a, b) = k.support();
            // independent trapezoid check on a fine grid
            let n = 20_000;
            let dx = (b - a) / n as f64;
            let trap: f64 = (0..=n).map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * k.eval(a + i as f64 * dx)
            }).sum::<f64>() * dx;
            prop_assert!((trap - 1.0).abs() < 1e-3);
            prop_assert!((k.mass(a, b) - 1.0).abs() < 1e-3);
        }

        #[test]
        fn permutation_invariant(mut samples in prop::collection::vec(0.0..60.0f64, 1..20), t in -10.0..70.0f64) {
            let a = fit_kde(&samples, 5.0).unwrap().eval(t);
            samples.reverse();
            let b = fit_kde(&samples, 5.0).unwrap().eval(t);
            prop_assert!((a - b).abs() <= 1e-15 * a.max(1.0));
        }

        #[test]
        fn sample_points_dominate_far_points(samples in prop::collection::vec(0.0..60.0f64, 1..10), h in 0.5..5.0f64, off in 0.0..100.0f64) {
            let k = fit_kde(&samples, h).unwrap();
            let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let far = hi + 3.0 * h + off;
            let far_density = k.eval(far);
            for &s in &samples {
                prop_assert!(k.eval(s) >= far_density);
            }
        }
    }
}
