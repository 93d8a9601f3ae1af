//! Per-dimension min-max scaling fitted on training features.

use serde::{Deserialize, Serialize};

use super::{BackboneError, FeatureVector, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Stats that leave values in [0, 1] unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    pub fn apply_values(&self, values: &[f32]) -> Result<Vec<f32>> {
        if values.len() != self.dim() {
            return Err(BackboneError::DimensionMismatch {
                expected: self.dim(),
                actual: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x as f64 - lo as f64) / (hi as f64 - lo as f64)) as f32
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn fit_feature_normalizer<'a, I>(train_features: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut it = train_features.into_iter();
    let first = it.next().ok_or(BackboneError::EmptySet)?;
    let mut stats = NormStats {
        min: first.values.clone(),
        max: first.values.clone(),
    };
    for f in it {
        if f.dim() != stats.dim() {
            return Err(BackboneError::DimensionMismatch {
                expected: stats.dim(),
                actual: f.dim(),
            });
        }
        for ((lo, hi), &x) in stats.min.iter_mut().zip(stats.max.iter_mut()).zip(&f.values) {
            *lo = lo.min(x);
            *hi = hi.max(x);
        }
    }
    Ok(stats)
}

/// `(x - min) / (max - min)`, or 0 where `max == min`. Not clamped.
pub fn apply_feature_normalizer(stats: &NormStats, feature: &FeatureVector) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: stats.apply_values(&feature.values)?,
        ..feature.clone()
    })
}
