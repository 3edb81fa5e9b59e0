//! Empirical covariance and sparse precision estimation.
//!
//! The graphical lasso minimizes `tr(P C) - log det P + phi ||P||_1` over
//! positive definite `P`. By default only off-diagonal entries are
//! penalized; [`GlassoOptions::penalize_diagonal`] adds the diagonal, which
//! is the same as replacing `C` by `C + phi I`.
//!
//! The solver works on the precision matrix directly, one row/column at a
//! time. With column `j` split off, `P11^{-1}` is read from the working
//! covariance `W = P^{-1}` and the column solves a lasso
//! `min 1/2 b^T (c_jj A) b + c_12^T b + phi ||b||_1` by cyclic coordinate
//! descent, warm-started at the current column. The diagonal entry then
//! follows in closed form and `W` is updated by the block inverse formula.
//! Each block update is an exact or descending step, so the objective
//! never increases and every iterate stays positive definite.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::graph::SignedGraph;
use crate::linalg::SparseSymMatrix;

/// Default magnitude below which precision entries are dropped when
/// building a graph.
pub const DEFAULT_PRUNE: f64 = 1e-8;

const INNER_MAX_ITER: usize = 1000;

/// Signals as rows, nodes as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl SignalMatrix {
    pub fn new(data: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("signal matrix is empty".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("signal matrix has non-finite entries".into()));
        }
        if let Some(l) = &labels {
            if l.len() != data.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: data.ncols(),
                    found: l.len(),
                });
            }
        }
        Ok(SignalMatrix { data, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("row {bad} has a different length")));
        }
        let data = DMatrix::from_fn(rows.len(), n, |s, i| rows[s][i]);
        Self::new(data, None)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn n_signals(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn signal(&self, s: usize) -> Vec<f64> {
        self.data.row(s).iter().copied().collect()
    }

    /// Rows `idx`, in that order; labels are kept.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&s| s >= self.n_signals()) {
            return Err(Error::InvalidInput(format!("row {bad} out of range")));
        }
        let data = DMatrix::from_fn(idx.len(), self.n_nodes(), |r, c| self.data[(idx[r], c)]);
        Self::new(data, self.labels.clone())
    }
}

/// `(1/S) sum_s (x_s - mean)(x_s - mean)^T + ridge I`.
///
/// Needs at least two signals; with `ridge = 0`, a matrix whose signals
/// are all identical is rejected.
pub fn empirical_covariance(x: &SignalMatrix, ridge: f64) -> Result<SparseSymMatrix> {
    let (s, n) = (x.n_signals(), x.n_nodes());
    if s < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 signals, got {s}")));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
    }
    let mean = x.data.row_mean();
    let mut centered = x.data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut c = centered.transpose() * &centered / s as f64;
    if ridge == 0.0 && c.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput(
            "all signals are identical; covariance is zero".into(),
        ));
    }
    // kill rounding asymmetry before the exact-symmetry conversion
    for i in 0..n {
        c[(i, i)] += ridge;
        for j in i + 1..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    SparseSymMatrix::from_dense(&c)
}

/// `1e-6 trace(C) / N`, the ridge used when `C` is singular.
pub fn default_ridge(c: &SparseSymMatrix) -> f64 {
    let n = c.n().max(1);
    1e-6 * c.diag().iter().sum::<f64>() / n as f64
}

/// Empirical covariance, plus [`default_ridge`] on the diagonal when it is
/// singular (for instance with fewer signals than nodes).
pub fn regularized_covariance(x: &SignalMatrix) -> Result<SparseSymMatrix> {
    let c = empirical_covariance(x, 0.0)?;
    if x.n_signals() > x.n_nodes() && Cholesky::new(c.to_dense()).is_some() {
        return Ok(c);
    }
    let ridge = default_ridge(&c).max(f64::MIN_POSITIVE);
    c.add_diagonal(&vec![ridge; c.n()])
}

#[derive(Debug, Clone, Copy)]
pub struct GlassoOptions {
    pub phi: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        GlassoOptions {
            phi: 0.1,
            tol: 1e-4,
            max_iter: 200,
            penalize_diagonal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub p: SparseSymMatrix,
    /// Working covariance `P^{-1}` at the last sweep.
    pub w: DMatrix<f64>,
    pub phi: f64,
    pub iterations: usize,
    /// Mean absolute change of the off-diagonal working covariance in the
    /// last sweep.
    pub delta: f64,
    pub converged: bool,
    /// Objective before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
}

/// `tr(P C) - log det P + phi ||P||_1`, infinite when `P` is not positive
/// definite.
pub fn glasso_objective(p: &DMatrix<f64>, c: &DMatrix<f64>, phi: f64, penalize_diagonal: bool) -> f64 {
    let Some(chol) = Cholesky::new(p.clone()) else {
        return f64::INFINITY;
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = p.component_mul(c).sum();
    let mut l1 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            if i != j || penalize_diagonal {
                l1 += p[(i, j)].abs();
            }
        }
    }
    trace - logdet + phi * l1
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn sym_inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(p.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("precision iterate lost definiteness".into()))?;
    let mut w = chol.inverse();
    let n = w.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

fn mean_abs_offdiag(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)].abs();
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Graphical lasso by block coordinate descent on the precision matrix.
///
/// Hitting `max_iter` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn glasso(c: &SparseSymMatrix, opts: &GlassoOptions) -> Result<PrecisionEstimate> {
    let n = c.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty covariance".into()));
    }
    if !(opts.phi >= 0.0) || !opts.phi.is_finite() {
        return Err(Error::InvalidInput(format!("phi must be nonnegative, got {}", opts.phi)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let c = c.to_dense();
    if let Some(i) = (0..n).find(|&i| !(c[(i, i)] > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "covariance diagonal entry {i} is not positive"
        )));
    }
    let phi = opts.phi;
    let mut cp = c.clone();
    if opts.penalize_diagonal {
        for i in 0..n {
            cp[(i, i)] += phi;
        }
    }

    let mut p = DMatrix::from_diagonal(&cp.diagonal().map(|d| 1.0 / d));
    let mut w = DMatrix::from_diagonal(&cp.diagonal());
    let objective = |p: &DMatrix<f64>| glasso_objective(p, &c, phi, opts.penalize_diagonal);
    let mut trace = vec![objective(&p)];
    let scale = mean_abs_offdiag(&c);
    let target = if scale > 0.0 { opts.tol * scale } else { opts.tol };
    // the diagonal must settle too, or a 2x2 problem stops after one sweep
    let diag_target = opts.tol * c.diagonal().mean();
    let inner_tol = 1e-2 * opts.tol;

    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = n == 1;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let w_before = w.clone();
        for j in 0..n {
            let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let m = others.len();
            // A = P11^{-1} = W11 - w12 w12^T / w22
            let a = DMatrix::from_fn(m, m, |r, s| {
                let (kr, ks) = (others[r], others[s]);
                w[(kr, ks)] - w[(kr, j)] * w[(ks, j)] / w[(j, j)]
            });
            let cjj = cp[(j, j)];
            let c12: Vec<f64> = others.iter().map(|&k| c[(k, j)]).collect();
            let mut theta: Vec<f64> = others.iter().map(|&k| p[(k, j)]).collect();
            // gradient of 1/2 t^T Q t + c12^T t with Q = cjj A
            let mut grad: Vec<f64> = (0..m)
                .map(|r| cjj * (0..m).map(|s| a[(r, s)] * theta[s]).sum::<f64>() + c12[r])
                .collect();
            for _ in 0..INNER_MAX_ITER {
                let mut max_step = 0.0_f64;
                let mut max_theta = 0.0_f64;
                for k in 0..m {
                    let qkk = cjj * a[(k, k)];
                    let old = theta[k];
                    let new = soft(qkk * old - grad[k], phi) / qkk;
                    if new != old {
                        let d = new - old;
                        for r in 0..m {
                            grad[r] += cjj * a[(r, k)] * d;
                        }
                        theta[k] = new;
                        max_step = max_step.max(d.abs());
                    }
                    max_theta = max_theta.max(new.abs());
                }
                if max_step <= inner_tol * (1.0 + max_theta) {
                    break;
                }
            }
            let gamma = 1.0 / cjj;
            let a_theta: Vec<f64> = (0..m)
                .map(|r| (0..m).map(|s| a[(r, s)] * theta[s]).sum())
                .collect();
            let quad: f64 = theta.iter().zip(&a_theta).map(|(t, at)| t * at).sum();
            for (r, &k) in others.iter().enumerate() {
                p[(k, j)] = theta[r];
                p[(j, k)] = theta[r];
            }
            p[(j, j)] = gamma + quad;
            // block inverse: W22 = 1/gamma, W12 = -A theta / gamma,
            // W11 = A + (A theta)(A theta)^T / gamma
            for r in 0..m {
                for s in 0..m {
                    w[(others[r], others[s])] = a[(r, s)] + a_theta[r] * a_theta[s] / gamma;
                }
                let v = -a_theta[r] / gamma;
                w[(others[r], j)] = v;
                w[(j, others[r])] = v;
            }
            w[(j, j)] = 1.0 / gamma;
        }
        w = sym_inverse(&p)?;
        trace.push(objective(&p));
        let diff = w.clone() - &w_before;
        delta = mean_abs_offdiag(&diff);
        let diag_delta = diff.diagonal().abs().mean();
        converged = delta < target && diag_delta < diag_target;
    }
    if n == 1 {
        delta = 0.0;
    }
    Ok(PrecisionEstimate {
        p: SparseSymMatrix::from_dense(&p)?,
        w,
        phi,
        iterations,
        delta,
        converged,
        objective_trace: trace,
    })
}

/// Reads `P` as a generalized Laplacian: `W_ij = -P_ij` off the diagonal
/// (entries with `|P_ij| <= prune` dropped) and self-loops
/// `W_ii = P_ii - sum_{j != i} W_ij`.
pub fn precision_to_graph(p: &SparseSymMatrix, prune: f64) -> Result<SignedGraph> {
    if !(prune >= 0.0) {
        return Err(Error::InvalidInput(format!("prune must be nonnegative, got {prune}")));
    }
    let n = p.n();
    let edges: Vec<(usize, usize, f64)> = p
        .upper_entries()
        .filter(|&(i, j, v)| i != j && v.abs() > prune)
        .map(|(i, j, v)| (i, j, -v))
        .collect();
    let mut loops = p.diag();
    for &(i, j, w) in &edges {
        loops[i] -= w;
        loops[j] -= w;
    }
    SignedGraph::from_edges(n, edges)?.with_self_loops(loops)
}
