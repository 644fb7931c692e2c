//! Per-dimension standardization fitted on training data only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard against zero-variance dimensions; they standardize to 0.
const MIN_STD: f64 = 1e-12;

/// Affine map taking each dimension to zero mean and unit variance, as
/// estimated from the rows it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on an iterator of feature rows (population statistics).
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidConfig("cannot standardize zero rows".into()))?;
        let dim = first.len();
        let mut n = 1.0f64;
        let mut sum: Vec<f64> = first.to_vec();
        let mut sq: Vec<f64> = first.iter().map(|v| v * v).collect();
        for row in iter {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            n += 1.0;
            for d in 0..dim {
                sum[d] += row[d];
                sq[d] += row[d] * row[d];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0).sqrt().max(MIN_STD))
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        for d in 0..x.len() {
            x[d] = (x[d] - self.mean[d]) / self.std[d];
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.transform_in_place(&mut out);
        out
    }
}
