//! Sparse symmetric matrix kernel.
//!
//! [`SparseSymMatrix`] stores the full symmetric pattern in compressed rows so
//! row-wise quantities (Gershgorin discs, matrix-vector products) need no
//! transposition. [`CsrMatrix`] is the general square counterpart used for
//! similarity-transformed matrices, which are no longer symmetric.
//!
//! The dense routines ([`dense_eig`] and friends) are the small-scale oracle
//! behind every spectral check in the crate and are capped at
//! [`DENSE_LIMIT`] rows.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest order accepted by the dense eigen oracle.
pub const DENSE_LIMIT: usize = 2000;

/// Eigenvalues closer than this are counted as one multiple eigenvalue.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

const SIGN_TOL: f64 = 1e-12;

/// General square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    fn from_sorted_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Gershgorin disc left-ends `A_ii - sum_{j != i} |A_ij|`, one per row.
    pub fn disc_left_ends(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let mut center = 0.0;
                let mut radius = 0.0;
                for (c, v) in self.row(i) {
                    if c == i {
                        center = v;
                    } else {
                        radius += v.abs();
                    }
                }
                center - radius
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] = v;
            }
        }
        m
    }
}

/// Symmetric sparse matrix; both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    csr: CsrMatrix,
}

impl SparseSymMatrix {
    /// Builds a symmetric matrix from entries given once per unordered pair.
    ///
    /// An off-diagonal entry `(i, j, v)` sets both `(i, j)` and `(j, i)`.
    /// Repeated pairs accumulate; exact zeros are not stored.
    pub fn from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        Ok(Self::from_unsorted_rows(n, rows))
    }

    fn from_unsorted_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in rows.iter_mut() {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            merged.retain(|&(_, v)| v != 0.0);
            *row = merged;
        }
        SparseSymMatrix {
            csr: CsrMatrix::from_sorted_rows(n, rows),
        }
    }

    /// Converts a dense matrix, which must be exactly symmetric.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "dense matrix is not symmetric at ({i}, {j})"
                    )));
                }
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_entries(n, entries)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let rows = d
            .iter()
            .enumerate()
            .map(|(i, &v)| if v != 0.0 { vec![(i, v)] } else { Vec::new() })
            .collect();
        SparseSymMatrix {
            csr: CsrMatrix::from_sorted_rows(d.len(), rows),
        }
    }

    pub fn n(&self) -> usize {
        self.csr.n
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.csr.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.csr.mul_vec(x)
    }

    /// Upper-triangle entries `(i, j, v)` with `i <= j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.row(i)
                .filter(move |&(c, _)| c >= i)
                .map(move |(c, v)| (i, c, v))
        })
    }

    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n(), x.len())?;
        Ok((0..self.n())
            .map(|i| x[i] * self.row(i).map(|(c, v)| v * x[c]).sum::<f64>())
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.csr.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseSymMatrix) -> Result<Self> {
        check_len(self.n(), other.n())?;
        let rows = (0..self.n())
            .map(|i| {
                self.row(i)
                    .chain(other.row(i).map(|(c, v)| (c, alpha * v)))
                    .collect()
            })
            .collect();
        Ok(Self::from_unsorted_rows(self.n(), rows))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let rows = (0..self.n())
            .map(|i| self.row(i).map(|(c, v)| (c, alpha * v)).collect())
            .collect();
        Self::from_unsorted_rows(self.n(), rows)
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self> {
        self.add_scaled(1.0, &Self::from_diagonal(d))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.csr.to_dense()
    }

    /// Principal submatrix on `idx`, which must be ascending and in range.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<Self> {
        let mut pos = vec![usize::MAX; self.n()];
        for (k, &i) in idx.iter().enumerate() {
            if i >= self.n() || (k > 0 && idx[k - 1] >= i) {
                return Err(Error::InvalidInput(
                    "submatrix indices must be ascending and in range".into(),
                ));
            }
            pos[i] = k;
        }
        let rows = idx
            .iter()
            .map(|&i| {
                self.row(i)
                    .filter(|&(c, _)| pos[c] != usize::MAX)
                    .map(|(c, v)| (pos[c], v))
                    .collect()
            })
            .collect();
        Ok(SparseSymMatrix {
            csr: CsrMatrix::from_sorted_rows(idx.len(), rows),
        })
    }

    /// Connected components of the off-diagonal pattern, each ascending,
    /// ordered by smallest member.
    pub fn pattern_components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut comp = vec![root];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for (c, _) in self.row(u) {
                    if !seen[c] {
                        seen[c] = true;
                        comp.push(c);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Writes Matrix Market coordinate format (real, symmetric, lower
    /// triangle, 1-based) with 17 significant digits.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        let lower: Vec<(usize, usize, f64)> = (0..self.n())
            .flat_map(|i| {
                self.row(i)
                    .filter(move |&(c, _)| c <= i)
                    .map(move |(c, v)| (i, c, v))
            })
            .collect();
        writeln!(w, "{} {} {}", self.n(), self.n(), lower.len())?;
        for (i, j, v) in lower {
            writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    /// Reads Matrix Market coordinate format. `symmetric` files may list
    /// either triangle; `general` files must be exactly symmetric.
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let header = header?.to_ascii_lowercase();
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
            return Err(Error::Parse {
                line: 1,
                message: "missing %%MatrixMarket matrix header".into(),
            });
        }
        if tokens[2] != "coordinate" || !(tokens[3] == "real" || tokens[3] == "integer") {
            return Err(Error::Parse {
                line: 1,
                message: "only real coordinate matrices are supported".into(),
            });
        }
        let symmetric = match tokens[4] {
            "symmetric" => true,
            "general" => false,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unsupported symmetry '{other}'"),
                })
            }
        };

        let mut size: Option<(usize, usize)> = None;
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match size {
                None => {
                    if parts.len() != 3 {
                        return Err(parse_err("expected 'rows cols nnz'".into()));
                    }
                    let rows: usize = parts[0].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let cols: usize = parts[1].parse().map_err(|e| parse_err(format!("{e}")))?;
                    if rows != cols {
                        return Err(parse_err("matrix is not square".into()));
                    }
                    size = Some((rows, parts[2].parse().map_err(|e| parse_err(format!("{e}")))?));
                }
                Some((n, _)) => {
                    if parts.len() != 3 {
                        return Err(parse_err("expected 'row col value'".into()));
                    }
                    let i: usize = parts[0].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let j: usize = parts[1].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let v: f64 = parts[2].parse().map_err(|e| parse_err(format!("{e}")))?;
                    if i == 0 || j == 0 || i > n || j > n {
                        return Err(parse_err(format!("index ({i}, {j}) out of range")));
                    }
                    entries.push((i - 1, j - 1, v));
                }
            }
        }
        let (n, nnz) = size.ok_or(Error::Parse {
            line: 1,
            message: "missing size line".into(),
        })?;
        if entries.len() != nnz {
            return Err(Error::Parse {
                line: 2,
                message: format!("declared {nnz} entries, found {}", entries.len()),
            });
        }
        if symmetric {
            Self::from_entries(n, entries)
        } else {
            let mut dense = DMatrix::zeros(n, n);
            for (i, j, v) in entries {
                dense[(i, j)] += v;
            }
            Self::from_dense(&dense)
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flips `v` so its first entry with magnitude above `1e-12` is positive.
pub fn canonicalize_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct DenseEigResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseEigResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvector `k` (0-based) as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of eigenvalues within [`MULTIPLICITY_TOL`] of eigenvalue `k`.
    pub fn multiplicity(&self, k: usize) -> usize {
        let lk = self.eigenvalues[k];
        self.eigenvalues
            .iter()
            .filter(|&&l| (l - lk).abs() <= MULTIPLICITY_TOL)
            .count()
    }
}

/// Dense eigendecomposition of a symmetric sparse matrix.
pub fn dense_eig(a: &SparseSymMatrix) -> Result<DenseEigResult> {
    if a.n() > DENSE_LIMIT {
        return Err(Error::TooLarge {
            n: a.n(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(dense_eig_matrix(a.to_dense()))
}

fn all_finite(e: &SymmetricEigen<f64, Dyn>) -> bool {
    e.eigenvalues.iter().chain(e.eigenvectors.iter()).all(|x| x.is_finite())
}

/// Symmetric QR iteration, retried on a Householder-conjugated copy when it
/// returns non-finite values. nalgebra's routine can produce NaN on some
/// very sparse matrices with exactly decoupled blocks; a reflection
/// `H = I - 2uu^T` with a dense `u` removes those zeros without changing the
/// spectrum.
fn symmetric_eigen(m: DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    let first = SymmetricEigen::new(m.clone());
    if all_finite(&first) {
        return first;
    }
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut last = first;
    for _ in 0..4 {
        let u: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let u = u.normalize();
        let mu = &m * &u;
        let umu = u.dot(&mu);
        // H M H = M - 2 u (Mu)^T - 2 (Mu) u^T + 4 (u^T M u) u u^T
        let hmh = &m - (&u * mu.transpose()) * 2.0 - (&mu * u.transpose()) * 2.0
            + (&u * u.transpose()) * (4.0 * umu);
        let mut e = SymmetricEigen::new(hmh);
        if all_finite(&e) {
            let utv = u.transpose() * &e.eigenvectors;
            e.eigenvectors -= (&u * utv) * 2.0;
            return e;
        }
        last = e;
    }
    last
}

/// Dense eigendecomposition of a symmetric dense matrix (only the lower
/// triangle is read by the underlying routine).
pub fn dense_eig_matrix(m: DMatrix<f64>) -> DenseEigResult {
    let n = m.nrows();
    if n == 0 {
        return DenseEigResult {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = symmetric_eigen(m);
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep the routine's original index order
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        canonicalize_sign(&mut v);
        for (r, x) in v.into_iter().enumerate() {
            eigenvectors[(r, dst)] = x;
        }
    }
    DenseEigResult {
        eigenvalues,
        eigenvectors,
    }
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn dense_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetric_eigen(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Smallest eigenpair by single-vector LOBPCG.
///
/// Each step runs Rayleigh-Ritz on `span{x, r, p}` (orthonormalized), where
/// `r` is the residual and `p` the previous search direction. Converged when
/// `||A v - lambda v|| <= tol * (1 + ||A||_F)`.
pub fn smallest_eigenpair(a: &SparseSymMatrix, tol: f64, max_iter: usize) -> Result<Eigenpair> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let n = a.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if n == 1 {
        return Ok(Eigenpair {
            value: a.get(0, 0),
            vector: vec![1.0],
            iterations: 0,
        });
    }
    let threshold = tol * (1.0 + a.frobenius_norm());

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut ax = a.mul_vec(&x);
    let mut lambda = dot(&x, &ax);
    let mut p: Option<Vec<f64>> = None;
    let mut residual = f64::INFINITY;

    for it in 0..max_iter {
        let r: Vec<f64> = ax.iter().zip(&x).map(|(av, xv)| av - lambda * xv).collect();
        residual = norm2(&r);
        if residual <= threshold {
            canonicalize_sign(&mut x);
            return Ok(Eigenpair {
                value: lambda,
                vector: x,
                iterations: it,
            });
        }

        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut candidates = vec![r];
        if let Some(prev) = p.take() {
            candidates.push(prev);
        }
        for mut v in candidates {
            let original = norm2(&v);
            if original == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
                }
            }
            let nv = norm2(&v);
            if nv > 1e-10 * original {
                v.iter_mut().for_each(|vi| *vi /= nv);
                basis.push(v);
            }
        }
        if basis.len() == 1 {
            // residual is numerically in span{x}; nothing left to improve
            break;
        }

        let abasis: Vec<Vec<f64>> = basis.iter().map(|q| a.mul_vec(q)).collect();
        let k = basis.len();
        let mut gram = DMatrix::zeros(k, k);
        for r in 0..k {
            for c in r..k {
                let g = 0.5 * (dot(&basis[r], &abasis[c]) + dot(&basis[c], &abasis[r]));
                gram[(r, c)] = g;
                gram[(c, r)] = g;
            }
        }
        let small = symmetric_eigen(gram);
        let (imin, _) = small
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty Ritz problem");
        let coeffs: Vec<f64> = small.eigenvectors.column(imin).iter().copied().collect();

        let mut direction = vec![0.0; n];
        for (c, q) in coeffs.iter().zip(&basis).skip(1) {
            direction.iter_mut().zip(q).for_each(|(d, qi)| *d += c * qi);
        }
        let mut next: Vec<f64> = x.iter().map(|xi| coeffs[0] * xi).collect();
        next.iter_mut().zip(&direction).for_each(|(v, d)| *v += d);
        let nn = norm2(&next);
        next.iter_mut().for_each(|v| *v /= nn);

        x = next;
        p = Some(direction);
        ax = a.mul_vec(&x);
        lambda = dot(&x, &ax);
    }
    Err(Error::NotConverged {
        solver: "lobpcg",
        iterations: max_iter,
        residual,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Conjugate gradients with the default iteration cap of `max(10 n, 1000)`.
pub fn cg_solve(a: &SparseSymMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let max_iter = (10 * a.n()).max(1000);
    cg_solve_with(a, b, CgOptions { tol, max_iter })
}

/// Conjugate gradients from a zero start; stops when
/// `||A x - b|| <= tol * ||b||`.
///
/// On hitting the cap, the error carries a condition estimate from the
/// Lanczos tridiagonal implied by the CG coefficients.
pub fn cg_solve_with(a: &SparseSymMatrix, b: &[f64], opts: CgOptions) -> Result<Vec<f64>> {
    let n = a.n();
    check_len(n, b.len())?;
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let target = opts.tol * bnorm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();

    for _ in 0..opts.max_iter {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "conjugate gradient found direction with p^T A p = {pap:.3e}"
            )));
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        alphas.push(alpha);
        betas.push(beta);
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_next;
    }
    if rr.sqrt() <= target {
        return Ok(x);
    }
    Err(Error::IterationCap {
        iterations: opts.max_iter,
        residual: rr.sqrt() / bnorm,
        condition: lanczos_condition(&alphas, &betas),
    })
}

fn lanczos_condition(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len().min(400);
    if k == 0 {
        return f64::NAN;
    }
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = 1.0 / alphas[i] + if i > 0 { betas[i - 1] / alphas[i - 1] } else { 0.0 };
        if i + 1 < k {
            let off = betas[i].sqrt() / alphas[i];
            t[(i, i + 1)] = off;
            t[(i + 1, i)] = off;
        }
    }
    let ev = symmetric_eigen(t).eigenvalues;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Gershgorin disc left-ends of a symmetric matrix; their minimum bounds
/// `lambda_min` from below.
pub fn disc_left_ends(a: &SparseSymMatrix) -> Vec<f64> {
    a.csr.disc_left_ends()
}

/// `S A S^{-1}` with `S = diag(s)`: entry `(i, j)` becomes `s_i A_ij / s_j`.
/// The sparsity pattern and the spectrum are preserved.
pub fn similarity_scale(a: &SparseSymMatrix, s: &[f64]) -> Result<CsrMatrix> {
    check_len(a.n(), s.len())?;
    if let Some(i) = s.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("scalar {i} is zero or non-finite")));
    }
    let rows = (0..a.n())
        .map(|i| a.row(i).map(|(c, v)| (c, s[i] * v / s[c])).collect())
        .collect();
    Ok(CsrMatrix::from_sorted_rows(a.n(), rows))
}
