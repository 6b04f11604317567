mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tscvx::conic::{solve, Cone, ConeProgram, ConeStatus};

use common::{admm_objective, planted_socp};

#[test]
fn random_socps_match_planted_optimum_and_admm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let planted = planted_socp(&mut rng, 10);
        let sol = solve(&planted.prog, 1e-8, 200).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal, "trial {trial}");
        assert!(sol.gap < 1e-6);
        let scale = 1.0 + planted.optimum.abs();
        assert!((sol.objective - planted.optimum).abs() < 1e-6 * scale, "trial {trial}");
        let oracle = admm_objective(&planted.prog, 1e-10, 200_000);
        assert!((sol.objective - oracle).abs() < 1e-5 * scale, "trial {trial}: {} vs {oracle}", sol.objective);
    }
}

#[test]
fn strong_duality_and_cone_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-8;
    for _ in 0..20 {
        let p = planted_socp(&mut rng, 15).prog;
        let sol = solve(&p, tol, 200).unwrap();
        let primal = p.objective(&sol.z);
        let dual: f64 = p.h.iter().zip(&sol.y).map(|(a, b)| a * b).sum();
        assert!((primal + dual).abs() <= 10.0 * tol * (1.0 + primal.abs()), "{primal} {dual}");
        for (range, cone) in p.cone_ranges().into_iter().zip(&p.cones) {
            if let Cone::Soc(_) = cone {
                let tail: f64 = sol.s[range.start + 1..range.end].iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(sol.s[range.start] >= tail - tol);
            }
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = planted_socp(&mut rng, 20).prog;
    let a = solve(&p, 1e-8, 200).unwrap();
    let b = solve(&p, 1e-8, 200).unwrap();
    assert_eq!(a.z, b.z);
    assert_eq!(a.y, b.y);
    assert_eq!(a.iters, b.iters);
}

#[test]
fn trace_file_roundtrip_preserves_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = planted_socp(&mut rng, 8).prog;
    let text = p.to_text();
    let back = ConeProgram::from_text(&text).unwrap();
    assert_eq!(solve(&back, 1e-8, 200).unwrap().z, solve(&p, 1e-8, 200).unwrap().z);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn planted_optimum_is_recovered(seed in any::<u64>(), n in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted = planted_socp(&mut rng, n);
        let sol = solve(&planted.prog, 1e-9, 200).unwrap();
        prop_assert!(sol.is_usable());
        prop_assert!((sol.objective - planted.optimum).abs() < 1e-5 * (1.0 + planted.optimum.abs()));
    }
}
