//! Disc alignment and disc-based sample selection.
//!
//! For the Laplacian `L_B` of a connected balanced graph, the first
//! eigenvector `v1` has no zero entry and the transform
//! `L_p = S L_B S^{-1}`, `S = diag(1 / v1)`, puts every Gershgorin disc
//! left-end exactly at `lambda_min`. Sampling node `i` adds one to the
//! center of row `i` of `H^T H + mu L_p`; scaling row `i` by `t_i` (and
//! column `i` by `1 / t_i`) trades its radius against the radii of its
//! neighbors. Coverage finds a sample set and scalars that move every
//! left-end to a threshold `T`, and [`gdas_sample`] bisects on `T` under a
//! sample budget.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{
    dense_eig, similarity_scale, smallest_eigenpair, CsrMatrix, SparseSymMatrix, DENSE_LIMIT,
};

/// Orders up to this size use the dense eigensolver.
const DENSE_EIG_MAX: usize = 400;
const REDUCIBLE_TOL: f64 = 1e-10;
const ALIGN_TOL: f64 = 1e-6;
const SEARCH_WIDTH: f64 = 1e-6;

/// The similarity-transformed Laplacian and the data that produced it.
#[derive(Debug, Clone)]
pub struct AlignedOperator {
    pub lp: CsrMatrix,
    /// First eigenvector (per component when built by
    /// [`gdpa_align_components`]).
    pub v1: Vec<f64>,
    pub lambda_min: f64,
    /// `s_i = 1 / v1_i`.
    pub scalars: Vec<f64>,
}

impl AlignedOperator {
    pub fn n(&self) -> usize {
        self.lp.n()
    }

    /// Largest `|left_end_i - lambda_min|`.
    pub fn alignment_error(&self) -> f64 {
        self.lp
            .disc_left_ends()
            .iter()
            .map(|le| (le - self.lambda_min).abs())
            .fold(0.0, f64::max)
    }

    fn degrees(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| self.lp.row(i).filter(|&(c, _)| c != i).count())
            .collect()
    }
}

fn first_eigenpair(l: &SparseSymMatrix) -> Result<(f64, Vec<f64>)> {
    if l.n() <= DENSE_EIG_MAX {
        let eig = dense_eig(l)?;
        return Ok((eig.eigenvalues[0], eig.vector(0)));
    }
    match smallest_eigenpair(l, 1e-11, 20 * l.n()) {
        Ok(p) => Ok((p.value, p.vector)),
        Err(_) if l.n() <= DENSE_LIMIT => {
            let eig = dense_eig(l)?;
            Ok((eig.eigenvalues[0], eig.vector(0)))
        }
        Err(e) => Err(e),
    }
}

/// Aligns the Laplacian of a connected balanced graph.
///
/// Fails with [`Error::Reducible`] when an entry of `v1` is numerically
/// zero, and with [`Error::InvalidInput`] when the transformed discs do not
/// line up (the graph behind `l_b` is not balanced).
pub fn gdpa_align(l_b: &SparseSymMatrix) -> Result<AlignedOperator> {
    if l_b.n() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let (lambda_min, v1) = first_eigenpair(l_b)?;
    let vmax = v1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(index) = v1.iter().position(|v| v.abs() < REDUCIBLE_TOL * vmax) {
        return Err(Error::Reducible {
            index,
            value: v1[index],
        });
    }
    let scalars: Vec<f64> = v1.iter().map(|v| 1.0 / v).collect();
    let lp = similarity_scale(l_b, &scalars)?;
    let op = AlignedOperator {
        lp,
        v1,
        lambda_min,
        scalars,
    };
    let scale = 1.0 + l_b.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let err = op.alignment_error();
    if err > ALIGN_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "disc left-ends deviate from lambda_min by {err:.3e}; is the graph balanced?"
        )));
    }
    Ok(op)
}

/// Aligns each connected component separately and reassembles the
/// block-diagonal result. `lambda_min` is the minimum over components; the
/// left-ends of a component sit at that component's own `lambda_min`.
pub fn gdpa_align_components(l_b: &SparseSymMatrix) -> Result<AlignedOperator> {
    let comps = l_b.pattern_components();
    if comps.len() <= 1 {
        return gdpa_align(l_b);
    }
    let n = l_b.n();
    let mut v1 = vec![0.0; n];
    let mut lambda_min = f64::INFINITY;
    for comp in &comps {
        let sub = gdpa_align(&l_b.principal_submatrix(comp)?)?;
        lambda_min = lambda_min.min(sub.lambda_min);
        for (k, &i) in comp.iter().enumerate() {
            v1[i] = sub.v1[k];
        }
    }
    let scalars: Vec<f64> = v1.iter().map(|v| 1.0 / v).collect();
    let lp = similarity_scale(l_b, &scalars)?;
    Ok(AlignedOperator {
        lp,
        v1,
        lambda_min,
        scalars,
    })
}

/// Result of one coverage pass at a fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub samples: Vec<usize>,
    pub scalars: Vec<f64>,
    /// Every left-end reached the threshold.
    pub achieved: bool,
    pub min_left_end: f64,
}

struct Discs<'a> {
    op: &'a AlignedOperator,
    mu: f64,
    centers: Vec<f64>,
    t: Vec<f64>,
}

impl Discs<'_> {
    /// `sum_j mu |L_p,ij| / t_j` over off-diagonal `j`.
    fn scaled_radius(&self, i: usize) -> f64 {
        self.op
            .lp
            .row(i)
            .filter(|&(c, _)| c != i)
            .map(|(c, v)| self.mu * v.abs() / self.t[c])
            .sum()
    }

    fn left_end(&self, i: usize) -> f64 {
        self.centers[i] - self.t[i] * self.scaled_radius(i)
    }

    /// Largest `t_i >= 1` with left-end at least `target`.
    fn fit(&mut self, i: usize, target: f64) {
        let r = self.scaled_radius(i);
        self.t[i] = if r > 0.0 {
            ((self.centers[i] - target) / r).max(1.0)
        } else {
            1.0
        };
    }
}

/// Coverage in the default visiting order: descending degree, ties by
/// index.
pub fn gdas_coverage(op: &AlignedOperator, mu: f64, threshold: f64) -> Result<Coverage> {
    let deg = op.degrees();
    let mut order: Vec<usize> = (0..op.n()).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    gdas_coverage_ordered(op, mu, threshold, &order)
}

/// Coverage visiting nodes in `order`, which must be a permutation.
///
/// A visited node not yet covered is sampled when its left-end is below
/// the threshold; it then gets the largest scalar keeping its left-end at
/// the threshold. From there, neighbors that reach the threshold with
/// `t = 1` are covered the same way in breadth-first order.
pub fn gdas_coverage_ordered(
    op: &AlignedOperator,
    mu: f64,
    threshold: f64,
    order: &[usize],
) -> Result<Coverage> {
    let n = op.n();
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidInput("threshold must be finite".into()));
    }
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidInput("visiting order is not a permutation".into()));
    }
    let mut discs = Discs {
        op,
        mu,
        centers: (0..n).map(|i| mu * op.lp.get(i, i)).collect(),
        t: vec![1.0; n],
    };
    let scale = (0..n)
        .map(|i| discs.centers[i].abs() + discs.scaled_radius(i))
        .fold(0.0, f64::max);
    let slack = 1e-12 * (1.0 + threshold.abs() + scale);
    let floor = threshold - slack;

    let mut covered = vec![false; n];
    let mut samples = Vec::new();
    let mut queue = VecDeque::new();
    for &root in order {
        if covered[root] {
            continue;
        }
        if discs.left_end(root) < floor {
            discs.centers[root] += 1.0;
            samples.push(root);
        }
        covered[root] = true;
        discs.fit(root, threshold);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for (v, _) in op.lp.row(u) {
                if v != u && !covered[v] && discs.left_end(v) >= floor {
                    covered[v] = true;
                    discs.fit(v, threshold);
                    queue.push_back(v);
                }
            }
        }
    }
    let min_left_end = (0..n).map(|i| discs.left_end(i)).fold(f64::INFINITY, f64::min);
    Ok(Coverage {
        samples,
        scalars: discs.t,
        achieved: min_left_end >= floor,
        min_left_end,
    })
}

/// Selected nodes with the threshold they certify.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// In selection order.
    pub nodes: Vec<usize>,
    pub t_final: f64,
    pub mu: f64,
    pub scalars_final: Vec<f64>,
}

impl SampleSet {
    /// Diagonal of `H^T H`.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut h = vec![0.0; n];
        for &i in &self.nodes {
            if i < n {
                h[i] = 1.0;
            }
        }
        h
    }

    /// Line-based text form:
    ///
    /// ```text
    /// nodes 4 0 7
    /// t_final 1.2500000000000000e-1
    /// mu 1.0000000000000000e-2
    /// scalars 1.0e0 ...
    /// ```
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let nodes: Vec<String> = self.nodes.iter().map(usize::to_string).collect();
        let scalars: Vec<String> = self.scalars_final.iter().map(|s| format!("{s:.16e}")).collect();
        writeln!(w, "nodes {}", nodes.join(" "))?;
        writeln!(w, "t_final {:.16e}", self.t_final)?;
        writeln!(w, "mu {:.16e}", self.mu)?;
        writeln!(w, "scalars {}", scalars.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut nodes = None;
        let mut t_final = None;
        let mut mu = None;
        let mut scalars = None;
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = k + 1;
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let perr = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let reals = |parts: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
                parts
                    .map(|p| p.parse::<f64>().map_err(|e| perr(format!("bad number {p:?}: {e}"))))
                    .collect()
            };
            match key {
                "nodes" => {
                    let v: Result<Vec<usize>> = parts
                        .map(|p| p.parse::<usize>().map_err(|e| perr(format!("bad node {p:?}: {e}"))))
                        .collect();
                    nodes = Some(v?);
                }
                "t_final" | "mu" => {
                    let v = reals(parts)?;
                    if v.len() != 1 {
                        return Err(perr(format!("{key} takes one value")));
                    }
                    if key == "mu" {
                        mu = Some(v[0]);
                    } else {
                        t_final = Some(v[0]);
                    }
                }
                "scalars" => scalars = Some(reals(parts)?),
                other => return Err(perr(format!("unknown key {other:?}"))),
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 0,
            message: format!("missing {what} line"),
        };
        let nodes = nodes.ok_or_else(|| missing("nodes"))?;
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("sample nodes are not distinct".into()));
        }
        Ok(SampleSet {
            nodes,
            t_final: t_final.ok_or_else(|| missing("t_final"))?,
            mu: mu.ok_or_else(|| missing("mu"))?,
            scalars_final: scalars.ok_or_else(|| missing("scalars"))?,
        })
    }
}

/// Largest threshold whose coverage needs at most `budget` samples, found
/// by bisection on `[mu lambda_min, mu lambda_min + 1]` down to width
/// `1e-6`.
///
/// Every probe depends only on its midpoint, so a larger budget accepts at
/// least the probes a smaller one does and `t_final` is nondecreasing in
/// the budget.
pub fn gdas_sample(op: &AlignedOperator, mu: f64, budget: usize) -> Result<SampleSet> {
    if budget > op.n() {
        return Err(Error::InvalidInput(format!(
            "budget {budget} exceeds {} nodes",
            op.n()
        )));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    let base = mu * op.lambda_min;
    let mut best = SampleSet {
        nodes: Vec::new(),
        t_final: base,
        mu,
        scalars_final: vec![1.0; op.n()],
    };
    if budget == 0 {
        return Ok(best);
    }
    let (mut lo, mut hi) = (base, base + 1.0);
    while hi - lo >= SEARCH_WIDTH {
        let mid = 0.5 * (lo + hi);
        let cov = gdas_coverage(op, mu, mid)?;
        if cov.achieved && cov.samples.len() <= budget {
            lo = mid;
            best = SampleSet {
                nodes: cov.samples,
                t_final: mid,
                mu,
                scalars_final: cov.scalars,
            };
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
