use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math;

/// Per-dimension affine standardization, frozen once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of `rows`, with the deviation floored at
    /// `min_std`.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize, min_std: f64) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            check_len("normalizer sample", dim, row.len())?;
            n += 1;
            for (i, &v) in row.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        if n == 0 {
            return Err(Error::EmptyData("normalizer samples"));
        }
        let inv = 1.0 / n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s * inv).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| math::sqrt((q * inv - m * m).max(0.0)).max(min_std))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}
