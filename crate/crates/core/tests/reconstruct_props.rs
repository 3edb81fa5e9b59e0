mod common;

use common::{random_balanced, random_signed_graph};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signgraph::gdpa_gdas::{gdas_sample, gdpa_align};
use signgraph::graph::generalized_laplacian;
use signgraph::linalg::dense_eig;
use signgraph::reconstruct::{deltacon, mse, reconstruct, relative_error, ReconstructionProblem, DELTACON_EPS};
use signgraph::SparseSymMatrix;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||Hx - y||^2 + mu x^T L x`.
fn objective(p: &ReconstructionProblem<'_>, x: &[f64]) -> f64 {
    let fit: f64 = p.nodes.iter().zip(p.y).map(|(&i, y)| (x[i] - y).powi(2)).sum();
    fit + p.mu * p.l.quad_form(x).unwrap()
}

/// `2 H^T (Hx - y) + 2 mu L x`.
fn gradient(p: &ReconstructionProblem<'_>, x: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = p.l.mul_vec(x).iter().map(|v| 2.0 * p.mu * v).collect();
    for (&i, y) in p.nodes.iter().zip(p.y) {
        g[i] += 2.0 * (x[i] - y);
    }
    g
}

/// Positive definite generalized Laplacian of a balanced graph.
fn pd_laplacian(n: usize, rng: &mut ChaCha8Rng) -> SparseSymMatrix {
    let l = generalized_laplacian(&random_balanced(n, rng));
    let lmin = dense_eig(&l).unwrap().min();
    l.add_diagonal(&vec![0.05 - lmin.min(0.0); n]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solution_is_stationary(seed in any::<u64>(), n in 2usize..=60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = pd_laplacian(n, &mut rng);
        let m = rng.random_range(1..=n);
        let nodes = sample(&mut rng, n, m).into_vec();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = rng.random_range(0.01..1.0);
        let p = ReconstructionProblem { l: &l, nodes: &nodes, y: &y, mu };
        let tol = 1e-10;
        let x = reconstruct(&p, tol).unwrap();
        prop_assert!(norm(&gradient(&p, &x)) <= 10.0 * tol * (1.0 + norm(&y)));

        // Analytic gradient against central differences at a generic point.
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient(&p, &x0);
        let h = 1e-5;
        for _ in 0..5 {
            let k = rng.random_range(0..n);
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp[k] += h;
            xm[k] -= h;
            let fd = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "coordinate {}: {} vs {}", k, fd, g[k]);
        }
    }

    #[test]
    fn deltacon_is_symmetric(seed in any::<u64>(), n in 3usize..=25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_signed_graph(n, 4.0, &mut rng);
        let b = random_signed_graph(n, 3.0, &mut rng);
        let ab = deltacon(&a, &b, DELTACON_EPS).unwrap();
        let ba = deltacon(&b, &a, DELTACON_EPS).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab > 0.0 && ab <= 1.0);
    }
}

#[test]
fn more_nested_samples_do_not_hurt_a_smooth_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for trial in 0..20 {
        let n = rng.random_range(10..=40);
        let l = pd_laplacian(n, &mut rng);
        let x_true = dense_eig(&l).unwrap().vector(0);
        let mu = 0.01;
        let op = gdpa_align(&l).unwrap();
        let full = gdas_sample(&op, mu, n / 2).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=full.nodes.len() {
            let nodes = &full.nodes[..m];
            let y: Vec<f64> = nodes.iter().map(|&i| x_true[i]).collect();
            let p = ReconstructionProblem { l: &l, nodes, y: &y, mu };
            let err = mse(&x_true, &reconstruct(&p, 1e-12).unwrap()).unwrap();
            assert!(err <= prev * (1.0 + 1e-9) + 1e-20, "trial {trial}, M = {m}: {err} > {prev}");
            prev = err;
        }
    }
}

#[test]
fn relative_error_is_not_symmetric() {
    let a = SparseSymMatrix::identity(2);
    let b = SparseSymMatrix::identity(2).scaled(2.0);
    let ab = relative_error(&a, &b).unwrap();
    let ba = relative_error(&b, &a).unwrap();
    assert_eq!(ab, 1.0);
    assert_eq!(ba, 0.5);
}
