mod common;

use common::random_signed_graph;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signgraph::graph::generalized_laplacian;
use signgraph::learn::{glasso, glasso_objective, precision_to_graph, GlassoOptions, DEFAULT_PRUNE};
use signgraph::linalg::dense_min_eigenvalue;
use signgraph::SparseSymMatrix;

fn random_covariance(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let s = n + 5;
    let x = DMatrix::from_fn(s, n, |_, _| rng.random_range(-1.0..1.0));
    x.transpose() * &x / s as f64 + DMatrix::identity(n, n) * 0.01
}

fn opts(phi: f64, penalize_diagonal: bool) -> GlassoOptions {
    GlassoOptions {
        phi,
        tol: 1e-10,
        max_iter: 2000,
        penalize_diagonal,
    }
}

/// Minimizes `f` over `[lo, hi]` by golden-section search.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 * (1.0 + lo.abs() + hi.abs()) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate minimization of the penalized likelihood over 2x2
/// positive definite `P = [[a, b], [b, c]]`.
fn brute_force_2x2(c: &DMatrix<f64>, phi: f64, penalize_diagonal: bool) -> DMatrix<f64> {
    let f = |a: f64, b: f64, d: f64| {
        glasso_objective(&DMatrix::from_row_slice(2, 2, &[a, b, b, d]), c, phi, penalize_diagonal)
    };
    let (mut a, mut b, mut d) = (1.0 / c[(0, 0)], 0.0, 1.0 / c[(1, 1)]);
    for _ in 0..300 {
        let edge = (a * d).sqrt() * (1.0 - 1e-12);
        b = golden(|t| f(a, t, d), -edge, edge);
        a = golden(|t| f(t, b, d), b * b / d * (1.0 + 1e-12), 100.0);
        d = golden(|t| f(a, b, t), b * b / a * (1.0 + 1e-12), 100.0);
    }
    DMatrix::from_row_slice(2, 2, &[a, b, b, d])
}

#[test]
fn two_by_two_matches_direct_minimization() {
    for (c12, phi) in [(0.8, 0.3), (-0.5, 0.1), (0.2, 0.5), (0.9, 0.05)] {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, c12, c12, 1.0]);
        let cs = SparseSymMatrix::from_dense(&c).unwrap();
        for full in [false, true] {
            let est = glasso(&cs, &opts(phi, full)).unwrap();
            let want = brute_force_2x2(&c, phi, full);
            let got = est.p.to_dense();
            assert!(
                (&got - &want).abs().max() < 1e-5,
                "c12 = {c12}, phi = {phi}, full = {full}: {got} vs {want}"
            );
            // Closed form on the working covariance.
            let w12 = c12.signum() * (c12.abs() - phi).max(0.0);
            let pad = if full { phi } else { 0.0 };
            assert!((est.w[(0, 1)] - w12).abs() < 1e-6);
            assert!((est.w[(0, 0)] - 2.0 - pad).abs() < 1e-6);
            assert!((est.w[(1, 1)] - 1.0 - pad).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn sweeps_descend_and_stay_definite(seed in any::<u64>(), n in 2usize..=15, phi in 0.0f64..0.5, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_covariance(n, &mut rng);
        let est = glasso(&SparseSymMatrix::from_dense(&c).unwrap(), &GlassoOptions {
            phi,
            tol: 1e-6,
            max_iter: 300,
            penalize_diagonal: full,
        }).unwrap();
        for w in est.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        let p = est.p.to_dense();
        prop_assert!(dense_min_eigenvalue(&p) > 0.0);
        let last = *est.objective_trace.last().unwrap();
        prop_assert!((glasso_objective(&p, &c, phi, full) - last).abs() <= 1e-9 * last.abs().max(1.0));
    }

    #[test]
    fn larger_penalty_gives_sparser_precision(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = SparseSymMatrix::from_dense(&random_covariance(n, &mut rng)).unwrap();
        let mut prev = usize::MAX;
        for phi in [0.01, 0.1, 1.0, 10.0] {
            let est = glasso(&c, &opts(phi, false)).unwrap();
            let nnz = est.p.upper_entries().filter(|&(i, j, v)| i != j && v != 0.0).count();
            prop_assert!(nnz <= prev, "phi = {}: {} off-diagonals after {}", phi, nnz, prev);
            prev = nnz;
        }
    }

    #[test]
    fn laplacian_round_trip(seed in any::<u64>(), n in 1usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loops: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = random_signed_graph(n, 4.0, &mut rng).with_self_loops(loops).unwrap();
        let back = precision_to_graph(&generalized_laplacian(&g), DEFAULT_PRUNE).unwrap();
        prop_assert_eq!(back.edge_count(), g.edge_count());
        for (a, b) in g.edges().iter().zip(back.edges()) {
            prop_assert_eq!((a.i, a.j), (b.i, b.j));
            prop_assert!((a.w - b.w).abs() <= 1e-12);
        }
        for (a, b) in g.self_loops().iter().zip(back.self_loops()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
