use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tscvx::dataset::{
    export_training, generate, rotate_instance, rotate_trajectory, sample_params, split_and_standardize, Dataset,
    GenConfig, SamplingRanges, Split, ROTATION_ANGLES,
};
use tscvx::discretization::defect_vectors;
use tscvx::problem::ProblemConstants;
use tscvx::scvx::feasibility;

fn small() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| generate(&GenConfig::new(3, 5, "desk").unwrap()).0)
}

fn bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    ds.write(&mut out).unwrap();
    out
}

#[test]
fn generation_is_byte_identical_across_thread_counts() {
    let cfg = GenConfig::new(3, 5, "desk").unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| generate(&cfg).0);
    assert_eq!(bytes(&one), bytes(small()));
}

#[test]
fn every_base_sample_has_eight_rotations() {
    let ds = small();
    assert_eq!(ds.samples.len(), 3 * ROTATION_ANGLES.len());
    for group in ds.samples.chunks(8) {
        let base = &group[0];
        assert_eq!(base.angle_deg, 0.0);
        for (a, s) in group.iter().enumerate() {
            assert_eq!(s.base_id, base.base_id);
            assert_eq!(s.id, base.base_id + a as u64);
            assert_eq!(s.angle_deg, ROTATION_ANGLES[a]);
            assert_eq!(s.tight_sets, base.tight_sets);
        }
    }
}

#[test]
fn rotated_labels_stay_feasible_for_rotated_instances() {
    let consts = ProblemConstants::default();
    for s in small().samples.iter().filter(|s| s.converged) {
        let inst = s.params.to_instance(&consts);
        let traj = s.solution.as_ref().unwrap().decode(&inst).unwrap();
        let f = feasibility(&traj, &inst).unwrap();
        assert!(f.within(consts.feas_tol), "sample {}: {f:?}", s.id);
    }
    let base = &small().samples[0];
    let inst = base.params.to_instance(&consts);
    let traj = base.solution.as_ref().unwrap().decode(&inst).unwrap();
    // defect vectors rotate with the state, so their Euclidean norms agree
    let d0 = defect_vectors(&traj, &consts).unwrap();
    let d1 = defect_vectors(&rotate_trajectory(&traj, 135.0), &consts).unwrap();
    for (a, b) in d0.iter().zip(&d1) {
        assert!((a.norm() - b.norm()).abs() < 1e-9);
    }
    let f0 = feasibility(&traj, &inst).unwrap();
    let f1 = feasibility(&rotate_trajectory(&traj, 135.0), &rotate_instance(&inst, 135.0)).unwrap();
    assert!((f0.max_violation - f1.max_violation).abs() < 1e-9);
}

#[test]
fn file_round_trip_and_header() {
    let ds = small();
    let back = Dataset::read(&bytes(ds)[..]).unwrap();
    assert_eq!(&back, ds);
    assert_eq!(ds.header.catalog_width, 350);
    assert_eq!(ds.header.n_nodes, 50);
    assert_eq!(ds.header.preset, "desk");
}

#[test]
fn split_keeps_rotation_groups_together() {
    let mut ds = small().clone();
    split_and_standardize(&mut ds, 0.67, 1, false).unwrap();
    for group in ds.samples.chunks(8) {
        assert!(group.iter().all(|s| s.split == group[0].split));
    }
    assert_eq!(ds.samples.iter().filter(|s| s.split == Some(Split::Train)).count(), 16);
    let norm = ds.header.standardization.as_ref().unwrap();
    assert_eq!(norm.width(), 16);
    assert!(norm.std.iter().all(|&s| s > 0.0));
}

#[test]
fn training_export_has_expected_columns() {
    let mut ds = small().clone();
    split_and_standardize(&mut ds, 0.67, 1, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (nc, ns) = export_training(&ds, dir.path()).unwrap();
    let usable = ds.samples.iter().filter(|s| s.usable_for_training()).count();
    assert_eq!(ns, usable);
    let cons = std::fs::read_to_string(dir.path().join("constraints.csv")).unwrap();
    let sols = std::fs::read_to_string(dir.path().join("solutions.csv")).unwrap();
    let header: Vec<&str> = cons.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3 + 16 + 1 + 350);
    assert_eq!(&header[..4], &["split", "id", "base_id", "r0_x"][..]);
    assert_eq!(cons.lines().count(), nc + 1);
    let sol_header = sols.lines().next().unwrap().split(',').count();
    assert_eq!(sol_header, 3 + 16 + 851);
    assert!(sols.lines().skip(1).all(|l| l.split(',').count() == sol_header));
    assert!(dir.path().join("standardization.json").exists());
}

proptest! {
    #[test]
    fn sampled_parameters_respect_desk_ranges(seed in 0u64..10_000) {
        let r = SamplingRanges::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_params(&mut rng, &r);
        let inst = p.to_instance(&ProblemConstants::default());
        prop_assert!(inst.validate().is_ok());
        let q = &inst.x0.q_bi;
        prop_assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(inst.x0.r_i[0] >= r.r_up[0] && inst.x0.r_i[0] <= r.r_up[1]);
        prop_assert!(inst.x0.m >= r.m0[0] && inst.x0.m <= r.m0[1]);
    }
}
