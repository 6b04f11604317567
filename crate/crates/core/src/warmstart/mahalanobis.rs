//! Out-of-distribution screening by Mahalanobis distance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Linear interpolation between the closest ranks of the sorted sample,
/// `p` in `[0, 1]` (the default `numpy.percentile` rule).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone)]
pub struct Mahalanobis {
    pub mean: DVector<f64>,
    pub inv_cov: DMatrix<f64>,
    /// Training distances at or below this are in distribution.
    pub threshold: f64,
}

impl Mahalanobis {
    /// Fits on the training rows; the threshold is the given percentile of
    /// the training distances. A singular covariance gets `1e-8 I` added.
    pub fn fit(rows: &[Vec<f64>], pct: f64) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().ok_or(Error::EmptyDataset)?.len();
        let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let mean = data.row_mean().transpose();
        let mut centered = data;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / ((n as f64 - 1.0).max(1.0));
        let inv_cov = match cov.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => (cov + DMatrix::identity(d, d) * 1e-8)
                .cholesky()
                .ok_or(Error::DegenerateCovariance)?
                .inverse(),
        };
        let mut model = Self { mean, inv_cov, threshold: 0.0 };
        let dists: Vec<f64> = rows.iter().map(|r| model.distance(r)).collect();
        model.threshold = percentile(&dists, pct)?;
        Ok(model)
    }

    pub fn from_parts(mean: Vec<f64>, inv_cov: DMatrix<f64>, threshold: f64) -> Self {
        Self { mean: DVector::from_vec(mean), inv_cov, threshold }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        (diff.transpose() * &self.inv_cov * &diff)[0].max(0.0).sqrt()
    }

    pub fn is_ood(&self, x: &[f64]) -> bool {
        self.distance(x) > self.threshold
    }

    /// Splits test row indices into (in-distribution, out-of-distribution).
    pub fn split(&self, rows: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
        (0..rows.len()).partition(|&i| !self.is_ood(&rows[i]))
    }
}
