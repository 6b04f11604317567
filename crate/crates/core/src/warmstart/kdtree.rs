//! Exact k-nearest-neighbor search under the Euclidean metric.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static KD-tree over points tagged with ids. Ties in distance resolve to
/// the lower id, so results match a linear scan exactly.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    ids: Vec<u64>,
    nodes: Vec<Node>,
    root: Option<usize>,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the point in the order it was given to [`KdTree::build`].
    pub index: usize,
    pub id: u64,
    pub dist2: f64,
}

fn closer(a: &Neighbor, b: &Neighbor) -> bool {
    (a.dist2, a.id) < (b.dist2, b.id)
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>, ids: Vec<u64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ids.len() != points.len() {
            return Err(Error::ShapeMismatch(format!("{} points but {} ids", points.len(), ids.len())));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::ShapeMismatch("points have different dimensions".into()));
        }
        let mut tree = Self { points, ids, nodes: Vec::new(), root: None, dim };
        let mut order: Vec<usize> = (0..tree.points.len()).collect();
        tree.root = tree.split(&mut order, 0);
        Ok(tree)
    }

    fn split(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = if self.dim == 0 { 0 } else { depth % self.dim };
        let mid = idx.len() / 2;
        if self.dim > 0 {
            let pts = &self.points;
            idx.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        }
        let point = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(Node { point, axis, left: None, right: None });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.split(lo, depth + 1);
        let right = self.split(&mut hi[1..], depth + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn nearest(&self, query: &[f64]) -> Result<Neighbor> {
        Ok(self.knn(query, 1)?[0])
    }

    /// The `k` nearest points sorted by distance, then id.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim {
            return Err(Error::ShapeMismatch(format!("query of dimension {} in a {}-d tree", query.len(), self.dim)));
        }
        let k = k.clamp(1, self.len());
        let mut best = Vec::with_capacity(k + 1);
        self.search(self.root, query, k, &mut best);
        Ok(best)
    }

    fn search(&self, node: Option<usize>, query: &[f64], k: usize, best: &mut Vec<Neighbor>) {
        let Some(slot) = node else { return };
        let n = &self.nodes[slot];
        let p = &self.points[n.point];
        let dist2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        let cand = Neighbor { index: n.point, id: self.ids[n.point], dist2 };
        if best.len() < k || closer(&cand, &best[best.len() - 1]) {
            let pos = best.partition_point(|b| closer(b, &cand));
            best.insert(pos, cand);
            best.truncate(k);
        }
        if self.dim == 0 {
            self.search(n.left, query, k, best);
            self.search(n.right, query, k, best);
            return;
        }
        let diff = query[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, k, best);
        // `<=` keeps equal-distance points on the far side reachable for the id tie-break.
        if best.len() < k || diff * diff <= best[best.len() - 1].dist2 {
            self.search(far, query, k, best);
        }
    }
}
