//! MAP reconstruction from samples and the evaluation metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::SignedGraph;
use crate::linalg::{cg_solve, SparseSymMatrix};

/// Default `epsilon` in the DELTACON similarity system.
pub const DELTACON_EPS: f64 = 0.05;

/// Observations `y` at distinct `nodes` of a signal smooth with respect to
/// `l`.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructionProblem<'a> {
    pub l: &'a SparseSymMatrix,
    pub nodes: &'a [usize],
    pub y: &'a [f64],
    pub mu: f64,
}

impl ReconstructionProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                found: self.y.len(),
            });
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidInput(format!("mu must be positive, got {}", self.mu)));
        }
        let n = self.l.n();
        let mut seen = vec![false; n];
        for &i in self.nodes {
            if i >= n {
                return Err(Error::InvalidInput(format!("sample node {i} outside {n} nodes")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!("sample node {i} repeated")));
            }
        }
        if let Some(k) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("observation {k} is not finite")));
        }
        Ok(())
    }

    /// `H^T H + mu L`.
    pub fn system(&self) -> Result<SparseSymMatrix> {
        let mut h = vec![0.0; self.l.n()];
        for &i in self.nodes {
            h[i] = 1.0;
        }
        self.l.scaled(self.mu).add_diagonal(&h)
    }

    /// `H^T y`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.l.n()];
        for (&i, &v) in self.nodes.iter().zip(self.y) {
            b[i] = v;
        }
        b
    }
}

/// Solves `(H^T H + mu L) x = H^T y` by conjugate gradients.
///
/// A system found indefinite or singular during the solve is reported as
/// [`Error::Singular`]; running out of iterations keeps its condition
/// estimate in [`Error::IterationCap`].
pub fn reconstruct(p: &ReconstructionProblem<'_>, tol: f64) -> Result<Vec<f64>> {
    p.validate()?;
    let b = p.rhs();
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; p.l.n()]);
    }
    let system = p.system()?;
    match cg_solve(&system, &b, tol) {
        Err(Error::NotPositiveDefinite(msg)) => Err(Error::Singular(format!(
            "H^T H + mu L is not positive definite: {msg}"
        ))),
        other => other,
    }
}

/// Mean squared entrywise difference.
pub fn mse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: xhat.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("mse of empty vectors".into()));
    }
    let sum: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// `||L - L_B||_F / ||L||_F`. Not symmetric in its arguments.
pub fn relative_error(l: &SparseSymMatrix, l_b: &SparseSymMatrix) -> Result<f64> {
    let norm = l.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("reference matrix has zero norm".into()));
    }
    Ok(l.add_scaled(-1.0, l_b)?.frobenius_norm() / norm)
}

/// `[I + eps^2 D - eps A]^{-1}` with signed `A` (self-loops excluded) and
/// `D = diag(sum_j |W_ij|)`.
pub fn deltacon_similarity(g: &SignedGraph, eps: f64) -> Result<DMatrix<f64>> {
    let n = g.n();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        m[(i, i)] += eps * eps * g.abs_degree(i);
        for &(j, w) in g.neighbors(i) {
            m[(i, j)] -= eps * w;
        }
    }
    m.try_inverse()
        .ok_or_else(|| Error::Singular("DELTACON similarity system is singular".into()))
}

/// DELTACON similarity `1 / (1 + d)`, with `d` the Matusita distance between
/// the node-similarity matrices. Entries enter through the signed square
/// root `sgn(s) sqrt(|s|)`, since signed graphs give negative similarities.
pub fn deltacon(g: &SignedGraph, g_b: &SignedGraph, eps: f64) -> Result<f64> {
    if g.n() != g_b.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: g_b.n(),
        });
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let s1 = deltacon_similarity(g, eps)?;
    let s2 = deltacon_similarity(g_b, eps)?;
    let root = |s: f64| s.signum() * s.abs().sqrt();
    let d2: f64 = s1
        .iter()
        .zip(s2.iter())
        .map(|(&a, &b)| {
            let d = root(a) - root(b);
            d * d
        })
        .sum();
    Ok(1.0 / (1.0 + d2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generalized_laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> SparseSymMatrix {
        let g = SignedGraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap();
        generalized_laplacian(&g)
    }

    #[test]
    fn all_sampled_with_tiny_mu_returns_observations() {
        let l = path(5);
        let nodes = [0, 1, 2, 3, 4];
        let y = [1.0, -2.0, 0.5, 3.0, -1.0];
        let p = ReconstructionProblem {
            l: &l,
            nodes: &nodes,
            y: &y,
            mu: 1e-8,
        };
        let x = reconstruct(&p, 1e-12).unwrap();
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn no_samples_gives_zero() {
        let l = path(4).add_diagonal(&[0.1; 4]).unwrap();
        let p = ReconstructionProblem {
            l: &l,
            nodes: &[],
            y: &[],
            mu: 0.5,
        };
        assert_eq!(reconstruct(&p, 1e-10).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 20;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.2 || j == i + 1 {
                    let w = rng.random_range(0.1..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    edges.push((i, j, w));
                }
            }
        }
        let g = SignedGraph::from_edges(n, edges).unwrap();
        let l = generalized_laplacian(&g);
        let shift = -crate::linalg::dense_eig(&l).unwrap().min() + 0.5;
        let l = l.add_diagonal(&vec![shift; n]).unwrap();
        let nodes = [1, 4, 9, 13, 17];
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ReconstructionProblem {
            l: &l,
            nodes: &nodes,
            y: &y,
            mu: 0.3,
        };
        let x = reconstruct(&p, 1e-13).unwrap();
        let b = nalgebra::DVector::from_vec(p.rhs());
        let direct = p.system().unwrap().to_dense().lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i] - direct[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_and_invalid_systems() {
        // B is singular on the isolated third node, but the right-hand side
        // lies in its range
        let l = SparseSymMatrix::from_entries(3, [(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.0)]).unwrap();
        let p = ReconstructionProblem {
            l: &l,
            nodes: &[0],
            y: &[1.0],
            mu: 1.0,
        };
        let x = reconstruct(&p, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);

        let neg = SparseSymMatrix::from_diagonal(&[-5.0, 1.0]);
        let p = ReconstructionProblem {
            l: &neg,
            nodes: &[1],
            y: &[1.0],
            mu: 1.0,
        };
        // the right-hand side never touches the negative direction
        assert!(reconstruct(&p, 1e-10).is_ok());
        let p = ReconstructionProblem {
            l: &neg,
            nodes: &[0],
            y: &[1.0],
            mu: 1.0,
        };
        assert!(matches!(reconstruct(&p, 1e-10), Err(Error::Singular(_))));

        let bad = |nodes: &[usize], y: &[f64], mu: f64| {
            reconstruct(&ReconstructionProblem { l: &l, nodes, y, mu }, 1e-8).is_err()
        };
        assert!(bad(&[0, 0], &[1.0, 1.0], 1.0));
        assert!(bad(&[3], &[1.0], 1.0));
        assert!(bad(&[0], &[1.0, 2.0], 1.0));
        assert!(bad(&[0], &[1.0], 0.0));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let l = path(3);
        assert_eq!(relative_error(&l, &l).unwrap(), 0.0);
        let i2 = SparseSymMatrix::identity(2);
        let zero = SparseSymMatrix::from_entries(2, []).unwrap();
        assert_eq!(relative_error(&i2, &zero).unwrap(), 1.0);
        assert!(relative_error(&zero, &i2).is_err());
    }

    #[test]
    fn deltacon_examples() {
        let g = SignedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, -0.5)]).unwrap();
        assert_eq!(deltacon(&g, &g, DELTACON_EPS).unwrap(), 1.0);
        let empty = SignedGraph::from_edges(3, []).unwrap();
        assert_eq!(deltacon(&empty, &empty, DELTACON_EPS).unwrap(), 1.0);
        let h = SignedGraph::from_edges(3, [(0, 1, 1.0)]).unwrap();
        let a = deltacon(&g, &h, DELTACON_EPS).unwrap();
        let b = deltacon(&h, &g, DELTACON_EPS).unwrap();
        assert!(a > 0.0 && a < 1.0);
        assert_eq!(a, b);
        assert!(deltacon(&g, &SignedGraph::from_edges(2, []).unwrap(), 0.05).is_err());
        assert!(deltacon(&g, &g, 0.0).is_err());
    }

    #[test]
    fn deltacon_inverse_matches_cg_columns() {
        let g = SignedGraph::from_edges(4, [(0, 1, 1.0), (1, 2, -0.5), (2, 3, 2.0), (0, 3, -1.0)])
            .unwrap();
        let eps = DELTACON_EPS;
        let s = deltacon_similarity(&g, eps).unwrap();
        let mut entries = Vec::new();
        for i in 0..4 {
            entries.push((i, i, 1.0 + eps * eps * g.abs_degree(i)));
        }
        for e in g.edges() {
            entries.push((e.i, e.j, -eps * e.w));
        }
        let m = SparseSymMatrix::from_entries(4, entries).unwrap();
        for c in 0..4 {
            let mut unit = vec![0.0; 4];
            unit[c] = 1.0;
            let col = cg_solve(&m, &unit, 1e-14).unwrap();
            for r in 0..4 {
                assert!((col[r] - s[(r, c)]).abs() < 1e-10);
            }
        }
    }
}
