use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tscvx::warmstart::interp::{IdwInterpolator, Pca};
use tscvx::warmstart::kdtree::KdTree;
use tscvx::warmstart::mahalanobis::{percentile, Mahalanobis};

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn linear_scan(points: &[Vec<f64>], ids: &[u64], q: &[f64]) -> (u64, f64) {
    let mut best = (u64::MAX, f64::INFINITY);
    for (p, &id) in points.iter().zip(ids) {
        let d = dist2(p, q);
        if d < best.1 || (d == best.1 && id < best.0) {
            best = (id, d);
        }
    }
    best
}

#[test]
fn kdtree_matches_linear_scan_on_500_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let points = random_rows(&mut rng, 400, 16);
    let ids: Vec<u64> = (0..400).map(|i| 1000 - 2 * i).collect();
    let tree = KdTree::build(points.clone(), ids.clone()).unwrap();
    for q in random_rows(&mut rng, 500, 16) {
        let nn = tree.nearest(&q).unwrap();
        let (id, d) = linear_scan(&points, &ids, &q);
        assert_eq!(nn.id, id);
        assert_eq!(nn.dist2, d);
    }
}

#[test]
fn kdtree_self_recall_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let points = random_rows(&mut rng, 200, 16);
    let tree = KdTree::build(points.clone(), (0..200).collect()).unwrap();
    for (i, p) in points.iter().enumerate() {
        let nn = tree.nearest(p).unwrap();
        assert_eq!((nn.id, nn.dist2), (i as u64, 0.0));
    }
}

#[test]
fn kdtree_ties_go_to_lowest_id() {
    let points = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]];
    let tree = KdTree::build(points, vec![9, 4, 7, 1]).unwrap();
    assert_eq!(tree.nearest(&[0.0, 0.0]).unwrap().id, 4);
    let knn = tree.knn(&[0.0, 0.0], 3).unwrap();
    assert_eq!(knn.iter().map(|n| n.id).collect::<Vec<_>>(), vec![4, 7, 9]);
}

proptest! {
    #[test]
    fn knn_matches_sorted_scan(seed in 0u64..500, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_rows(&mut rng, 60, 4);
        let tree = KdTree::build(points.clone(), (0..60).collect()).unwrap();
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut scan: Vec<(f64, u64)> = points.iter().enumerate().map(|(i, p)| (dist2(p, &q), i as u64)).collect();
        scan.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<u64> = tree.knn(&q, k).unwrap().iter().map(|n| n.id).collect();
        let want: Vec<u64> = scan.iter().take(k).map(|s| s.1).collect();
        prop_assert_eq!(got, want);
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // correlated Gaussian: x = L z with a fixed lower-triangular L
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            (0..d).map(|i| (0..=i).map(|j| z[j] / (1.0 + (i - j) as f64)).sum()).collect()
        })
        .collect()
}

#[test]
fn mahalanobis_flags_five_percent_at_95th_percentile() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rows = gaussian_rows(&mut rng, 400, 6);
    let model = Mahalanobis::fit(&rows, 0.95).unwrap();
    let (_, ood) = model.split(&rows);
    assert!((ood.len() as i64 - 20).abs() <= 1, "{} flagged", ood.len());

    // sort-based oracle of the threshold
    let mut d: Vec<f64> = rows.iter().map(|r| model.distance(r)).collect();
    d.sort_by(f64::total_cmp);
    let pos = 0.95 * (d.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    assert_eq!(model.threshold, d[lo] + frac * (d[lo + 1] - d[lo]));
    assert_eq!(ood.len(), d.iter().filter(|&&v| v > model.threshold).count());
}

#[test]
fn mahalanobis_reduces_to_euclidean_for_identity_covariance() {
    let m = Mahalanobis::from_parts(vec![1.0, 2.0, 3.0], DMatrix::identity(3, 3), 2.0);
    assert_eq!(m.distance(&[1.0, 2.0, 3.0]), 0.0);
    assert!((m.distance(&[4.0, 2.0, 3.0]) - 3.0).abs() < 1e-15);
    assert!(m.is_ood(&[4.0, 2.0, 3.0]));
    assert!(!m.is_ood(&[1.0, 2.0, 3.0]));
}

#[test]
fn mahalanobis_regularizes_singular_covariance() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let m = Mahalanobis::fit(&rows, 0.95).unwrap();
    assert!(m.distance(&rows[3]).is_finite());
}

#[test]
fn percentile_matches_numpy_linear_rule() {
    let v = [3.0, 1.0, 4.0, 1.0, 5.0];
    assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
    assert_eq!(percentile(&v, 1.0).unwrap(), 5.0);
    assert_eq!(percentile(&v, 0.5).unwrap(), 3.0);
    assert!((percentile(&v, 0.9).unwrap() - 4.6).abs() < 1e-12);
}

#[test]
fn pca_reconstruction_loss_equals_tail_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let rows = gaussian_rows(&mut rng, 300, 16);
    let pca = Pca::fit(&rows, 10).unwrap();
    assert_eq!(pca.n_components(), 10);

    let n = rows.len();
    let data = DMatrix::from_fn(n, 16, |i, j| rows[i][j]);
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let tail: f64 = eig[10..].iter().sum();
    assert!((pca.tail_variance() - tail).abs() < 1e-9 * (1.0 + tail));

    let loss: f64 = rows.iter().map(|r| dist2(r, &pca.lift(&pca.project(r)))).sum::<f64>() / (n as f64 - 1.0);
    assert!((loss - tail).abs() < 1e-9 * (1.0 + tail), "{loss} vs {tail}");
}

#[test]
fn idw_recalls_training_points_and_averages_midpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let rows = random_rows(&mut rng, 40, 16);
    let idw = IdwInterpolator::fit(&rows, (0..40).collect(), 10, 11).unwrap();
    for (i, r) in rows.iter().enumerate().take(10) {
        assert_eq!(idw.weights(r).unwrap(), vec![(i, 1.0)]);
    }
    let pair = vec![vec![0.0; 16], {
        let mut v = vec![0.0; 16];
        v[0] = 2.0;
        v
    }];
    let idw = IdwInterpolator::fit(&pair, vec![0, 1], 10, 11).unwrap();
    let mut mid = vec![0.0; 16];
    mid[0] = 1.0;
    let w = idw.weights(&mid).unwrap();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|(_, w)| (w - 0.5).abs() < 1e-12));
}
