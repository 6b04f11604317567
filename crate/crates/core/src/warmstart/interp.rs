//! Principal-component projection and inverse-distance weighting, the
//! scattered-data interpolation baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::kdtree::KdTree;
use crate::error::{Error, Result};

/// Principal components of a row-sample matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// Columns are the kept components, strongest first.
    pub components: DMatrix<f64>,
    /// Every covariance eigenvalue in descending order.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits on `rows` with covariance normalized by `n - 1`, keeping at most
    /// `keep` components.
    pub fn fit(rows: &[Vec<f64>], keep: usize) -> Result<Self> {
        let n = rows.len();
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let d = first.len();
        let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let mean = data.row_mean().transpose();
        let mut centered = data;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / ((n as f64 - 1.0).max(1.0));
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let keep = keep.min(d);
        let components = DMatrix::from_fn(d, keep, |i, j| eig.eigenvectors[(i, order[j])]);
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        Ok(Self { mean, components, eigenvalues })
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered = DVector::from_column_slice(x) - &self.mean;
        (self.components.transpose() * centered).iter().copied().collect()
    }

    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        (&self.components * DVector::from_column_slice(z) + &self.mean).iter().copied().collect()
    }

    /// Variance left out by the kept components.
    pub fn tail_variance(&self) -> f64 {
        self.eigenvalues[self.n_components()..].iter().sum()
    }
}

/// Inverse-distance weights over the `k` nearest points in PCA space.
#[derive(Debug, Clone)]
pub struct IdwInterpolator {
    pub pca: Pca,
    tree: KdTree,
    pub k: usize,
    pub power: f64,
}

impl IdwInterpolator {
    pub fn fit(rows: &[Vec<f64>], ids: Vec<u64>, components: usize, k: usize) -> Result<Self> {
        let pca = Pca::fit(rows, components)?;
        let projected = rows.iter().map(|r| pca.project(r)).collect();
        let tree = KdTree::build(projected, ids)?;
        Ok(Self { pca, tree, k, power: 2.0 })
    }

    /// `(row index, weight)` pairs summing to one. A query that coincides
    /// with a stored point in PCA space returns that point alone.
    pub fn weights(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        let z = self.pca.project(query);
        let nbrs = self.tree.knn(&z, self.k)?;
        if nbrs[0].dist2 == 0.0 {
            return Ok(vec![(nbrs[0].index, 1.0)]);
        }
        let raw: Vec<f64> = nbrs.iter().map(|n| n.dist2.powf(-self.power / 2.0)).collect();
        let total: f64 = raw.iter().sum();
        Ok(nbrs.iter().zip(raw).map(|(n, w)| (n.index, w / total)).collect())
    }
}
