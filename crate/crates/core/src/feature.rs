//! Appearance feature vectors and their arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("feature vector has zero norm")]
    ZeroNorm,
    #[error("feature vector contains non-finite values")]
    NonFinite,
    #[error("no feature samples to aggregate")]
    Empty,
    #[error("confidence weights must be non-negative with at least one positive")]
    InvalidWeights,
}

/// A real-valued appearance embedding.
///
/// Vectors produced by [`FeatureVector::unit`] or [`aggregate_features`] have
/// unit L2 norm; raw provider output may not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Normalize `values` to unit length.
    pub fn unit(values: Vec<f64>) -> Result<Self, FeatureError> {
        Self(values).normalized()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        self.is_finite() && (self.norm() - 1.0).abs() <= tol
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64, FeatureError> {
        if self.dim() != other.dim() {
            return Err(FeatureError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn normalized(mut self) -> Result<Self, FeatureError> {
        if !self.is_finite() {
            return Err(FeatureError::NonFinite);
        }
        let n = self.norm();
        if n <= f64::MIN_POSITIVE || !n.is_finite() {
            return Err(FeatureError::ZeroNorm);
        }
        self.0.iter_mut().for_each(|v| *v /= n);
        Ok(self)
    }
}

pub fn cosine_similarity(f: &FeatureVector, g: &FeatureVector) -> Result<f64, FeatureError> {
    let dot = f.dot(g)?;
    let nf = f.norm();
    let ng = g.norm();
    if nf <= f64::MIN_POSITIVE || ng <= f64::MIN_POSITIVE {
        return Err(FeatureError::ZeroNorm);
    }
    if !dot.is_finite() || !nf.is_finite() || !ng.is_finite() {
        return Err(FeatureError::NonFinite);
    }
    Ok((dot / (nf * ng)).clamp(-1.0, 1.0))
}

/// Confidence-weighted sum of per-frame features, L2-normalized.
pub fn aggregate_features(samples: &[(FeatureVector, f64)]) -> Result<FeatureVector, FeatureError> {
    let (first, _) = samples.first().ok_or(FeatureError::Empty)?;
    let dim = first.dim();
    if samples.iter().any(|(_, c)| !(*c >= 0.0) || !c.is_finite())
        || !samples.iter().any(|(_, c)| *c > 0.0)
    {
        return Err(FeatureError::InvalidWeights);
    }
    let mut sum = vec![0.0; dim];
    for (f, c) in samples {
        if f.dim() != dim {
            return Err(FeatureError::DimensionMismatch {
                left: dim,
                right: f.dim(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(f.as_slice()) {
            *acc += c * v;
        }
    }
    FeatureVector::new(sum).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        let u = fv(&[0.6, 0.8]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(),
            0.0
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[s, s])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0, 0.0])),
            Err(FeatureError::DimensionMismatch { left: 2, right: 3 })
        ));
        assert_eq!(
            cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(FeatureError::ZeroNorm)
        );
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_features(&[(fv(&[3.0, 4.0]), 1.0)]).unwrap();
        assert!((a.as_slice()[0] - 0.6).abs() < 1e-12 && (a.as_slice()[1] - 0.8).abs() < 1e-12);

        let b = aggregate_features(&[(fv(&[1.0, 0.0]), 0.2), (fv(&[1.0, 0.0]), 0.9)]).unwrap();
        assert_eq!(b.as_slice(), &[1.0, 0.0]);

        let c = aggregate_features(&[(fv(&[1.0, 0.0]), 1.0), (fv(&[0.0, 1.0]), 1.0)]).unwrap();
        assert!((c.as_slice()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        assert!((c.as_slice()[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate_features(&[]), Err(FeatureError::Empty));
        assert_eq!(
            aggregate_features(&[(fv(&[1.0, 0.0]), 0.0)]),
            Err(FeatureError::InvalidWeights)
        );
        assert_eq!(
            aggregate_features(&[(fv(&[1.0, 0.0]), -1.0), (fv(&[1.0, 0.0]), 2.0)]),
            Err(FeatureError::InvalidWeights)
        );
        assert_eq!(
            aggregate_features(&[(fv(&[1.0, 0.0]), 1.0), (fv(&[-1.0, 0.0]), 1.0)]),
            Err(FeatureError::ZeroNorm)
        );
    }

    fn samples() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
        prop::collection::vec(
            (prop::collection::vec(-1.0..1.0f64, 8), 0.01..1.0f64),
            1..20,
        )
    }

    proptest! {
        #[test]
        fn aggregate_is_unit_norm(s in samples()) {
            let input: Vec<_> = s.into_iter().map(|(v, c)| (FeatureVector::new(v), c)).collect();
            if let Ok(f) = aggregate_features(&input) {
                prop_assert!((f.norm() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn aggregate_invariant_to_confidence_scale(s in samples(), scale in 0.01..100.0f64) {
            let a: Vec<_> = s.iter().map(|(v, c)| (FeatureVector::new(v.clone()), *c)).collect();
            let b: Vec<_> = s.iter().map(|(v, c)| (FeatureVector::new(v.clone()), c * scale)).collect();
            if let (Ok(fa), Ok(fb)) = (aggregate_features(&a), aggregate_features(&b)) {
                for (x, y) in fa.as_slice().iter().zip(fb.as_slice()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn cosine_scale_invariant(
            f in prop::collection::vec(-1.0..1.0f64, 6),
            g in prop::collection::vec(-1.0..1.0f64, 6),
            a in 0.1..10.0f64,
            b in 0.1..10.0f64,
        ) {
            let f1 = FeatureVector::new(f.clone());
            let g1 = FeatureVector::new(g.clone());
            let f2 = FeatureVector::new(f.iter().map(|v| v * a).collect());
            let g2 = FeatureVector::new(g.iter().map(|v| v * b).collect());
            if let (Ok(c1), Ok(c2)) = (cosine_similarity(&f1, &g1), cosine_similarity(&f2, &g2)) {
                prop_assert!((c1 - c2).abs() < 1e-9);
            }
        }
    }
}
