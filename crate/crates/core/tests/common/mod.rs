#![allow(dead_code)]

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use signgraph::harness::{generate_balanced_graph, GraphParams};
use signgraph::linalg::dense_min_eigenvalue;
use signgraph::{SignedGraph, SparseSymMatrix};

/// Connected graph with random signs: random spanning tree, then random
/// extra pairs up to `round(avg_degree n / 2)` edges.
pub fn random_signed_graph(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng) -> SignedGraph {
    let target = ((avg_degree * n as f64 / 2.0).round() as usize)
        .max(n.saturating_sub(1))
        .min(n * n.saturating_sub(1) / 2);
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize, rng: &mut ChaCha8Rng, edges: &mut Vec<(usize, usize, f64)>| {
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            let w = rng.random_range(0.1..=2.0);
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            edges.push((key.0, key.1, s * w));
        }
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        push(i, j, rng, &mut edges);
    }
    while edges.len() < target {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            push(a, b, rng, &mut edges);
        }
    }
    SignedGraph::from_edges(n, edges).unwrap()
}

/// Self-loops giving the switched positive graph the loops `base`.
pub fn loops_over_switch(g: &SignedGraph, base: &[f64]) -> Vec<f64> {
    let mut loops = base.to_vec();
    for e in g.edges() {
        if e.w < 0.0 {
            loops[e.i] -= 2.0 * e.w;
            loops[e.j] -= 2.0 * e.w;
        }
    }
    loops
}

/// Connected balanced graph; its switched positive graph has self-loops in
/// `[-0.2, 0.5]`.
pub fn random_balanced(n: usize, rng: &mut ChaCha8Rng) -> SignedGraph {
    let hi = (n as f64 - 1.0).min(6.0);
    let avg = if hi > 2.0 { rng.random_range(2.0..=hi) } else { hi };
    let p = GraphParams {
        n,
        avg_degree: avg,
        weight_range: [0.1, 2.0],
        neg_fraction: rng.random_range(0.2..0.8),
    };
    let g = generate_balanced_graph(&p, rng.random()).unwrap();
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.5)).collect();
    let loops = loops_over_switch(&g, &base);
    g.with_self_loops(loops).unwrap()
}

pub fn sampling_matrix(n: usize, nodes: &[usize]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, n);
    for &i in nodes {
        h[(i, i)] = 1.0;
    }
    h
}

/// `lambda_min(H^T H + mu L)`.
pub fn lambda_min_sampled(l: &SparseSymMatrix, nodes: &[usize], mu: f64) -> f64 {
    dense_min_eigenvalue(&(sampling_matrix(l.n(), nodes) + l.to_dense() * mu))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
