use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signgraph::linalg::{cg_solve, dense_eig, disc_left_ends, smallest_eigenpair};
use signgraph::SparseSymMatrix;

fn random_sparse(n: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseSymMatrix {
    let mut entries = Vec::new();
    for i in 0..n {
        entries.push((i, i, rng.random_range(-2.0..4.0)));
        for j in i + 1..n {
            if rng.random_bool(density.min(1.0)) {
                entries.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseSymMatrix::from_entries(n, entries).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn iterative_eigenpair_matches_dense(seed in any::<u64>(), n in 2usize..=200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_sparse(n, 4.0 / n as f64, &mut rng);
        let tol = 1e-10;
        let p = smallest_eigenpair(&a, tol, 20 * n.max(500)).unwrap();
        let dense = dense_eig(&a).unwrap().min();
        prop_assert!((p.value - dense).abs() <= 10.0 * tol * (1.0 + dense.abs()), "{} vs {}", p.value, dense);
        let bound = disc_left_ends(&a).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(bound <= dense + 1e-12);
    }

    #[test]
    fn cg_on_diagonally_dominant_systems(seed in any::<u64>(), n in 1usize..=100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_sparse(n, 3.0 / n as f64, &mut rng);
        let shift: Vec<f64> = disc_left_ends(&a).iter().map(|e| (0.1 - e).max(0.0)).collect();
        let a = a.add_diagonal(&shift).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = cg_solve(&a, &b, 1e-10).unwrap();
        let r: f64 = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(r <= 1e-10 * nb);
    }
}
