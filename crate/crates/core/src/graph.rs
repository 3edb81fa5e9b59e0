//! Signed graphs with self-loops and the frequency-notion utilities built on
//! them: Laplacians, GLR, balance certificates, signed switching, boundary
//! condition matrices, nodal domains and maximally sign-smooth signals.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseSymMatrix;

/// Undirected edge stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected signed graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl SignedGraph {
    /// Builds a loop-free graph. Each unordered pair may appear once, in
    /// either orientation, with a finite nonzero weight.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut list = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) outside a graph of {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) is a self-loop; use with_self_loops"
                )));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) has invalid weight {w}"
                )));
            }
            list.push(Edge {
                i: a.min(b),
                j: a.max(b),
                w,
            });
        }
        list.sort_by_key(|e| (e.i, e.j));
        if let Some(pair) = list.windows(2).find(|p| (p[0].i, p[0].j) == (p[1].i, p[1].j)) {
            return Err(Error::InvalidInput(format!(
                "duplicate edge ({}, {})",
                pair[0].i, pair[0].j
            )));
        }
        Ok(Self::from_sorted(n, list, vec![0.0; n]))
    }

    fn from_sorted(n: usize, edges: Vec<Edge>, self_loops: Vec<f64>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        for row in adj.iter_mut() {
            row.sort_by_key(|&(v, _)| v);
        }
        SignedGraph {
            n,
            edges,
            adj,
            self_loops,
        }
    }

    /// Replaces the self-loop weights (zero means no loop).
    pub fn with_self_loops(mut self, loops: Vec<f64>) -> Result<Self> {
        if loops.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: loops.len(),
            });
        }
        if loops.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite self-loop weight".into()));
        }
        self.self_loops = loops;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `i` with edge weights, ascending by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adj[i]
            .binary_search_by_key(&j, |&(v, _)| v)
            .ok()
            .map(|pos| self.adj[i][pos].1)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// `sum_j |W_ij|` over inter-node edges.
    pub fn abs_degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|(_, w)| w.abs()).sum()
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        self.self_loops[i]
    }

    pub fn self_loops(&self) -> &[f64] {
        &self.self_loops
    }

    pub fn has_negative_edges(&self) -> bool {
        self.edges.iter().any(|e| e.w < 0.0)
    }

    /// Connected components, each sorted ascending, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for root in 0..self.n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut comp = vec![root];
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().len() == 1
    }

    /// Reads the edge-list format: a `n <count>` header followed by
    /// `i j w` lines (0-based); `i i w` sets a self-loop. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        let mut loops: Vec<(usize, f64, usize)> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match n {
                None => {
                    if parts.len() != 2 || parts[0] != "n" {
                        return Err(err("expected header 'n <count>'".into()));
                    }
                    n = Some(parts[1].parse().map_err(|e| err(format!("{e}")))?);
                }
                Some(count) => {
                    if parts.len() != 3 {
                        return Err(err("expected 'i j w'".into()));
                    }
                    let i: usize = parts[0].parse().map_err(|e| err(format!("{e}")))?;
                    let j: usize = parts[1].parse().map_err(|e| err(format!("{e}")))?;
                    let w: f64 = parts[2].parse().map_err(|e| err(format!("{e}")))?;
                    if i >= count || j >= count {
                        return Err(err(format!("node index out of range for n = {count}")));
                    }
                    if i == j {
                        loops.push((i, w, line_no));
                    } else {
                        edges.push((i, j, w));
                    }
                }
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 1,
            message: "missing header 'n <count>'".into(),
        })?;
        let mut self_loops = vec![0.0; n];
        let mut seen = vec![false; n];
        for (i, w, line) in loops {
            if seen[i] {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate self-loop at node {i}"),
                });
            }
            seen[i] = true;
            self_loops[i] = w;
        }
        Self::from_edges(n, edges)?.with_self_loops(self_loops)
    }

    /// Writes the edge-list format with 17 significant digits.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n {}", self.n)?;
        for e in &self.edges {
            writeln!(w, "{} {} {:.16e}", e.i, e.j, e.w)?;
        }
        for (i, &l) in self.self_loops.iter().enumerate() {
            if l != 0.0 {
                writeln!(w, "{i} {i} {l:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Per-node color in `{+1, -1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct Coloring(Vec<i8>);

impl Coloring {
    pub fn new(beta: Vec<i8>) -> Result<Self> {
        if let Some(i) = beta.iter().position(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidInput(format!("color of node {i} is not +1 or -1")));
        }
        Ok(Coloring(beta))
    }

    pub fn uniform(n: usize) -> Self {
        Coloring(vec![1; n])
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<i8>> for Coloring {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Coloring::new(v)
    }
}

impl From<Coloring> for Vec<i8> {
    fn from(c: Coloring) -> Self {
        c.0
    }
}

/// Boundary condition at one end of a path graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// Reflection about the midpoint between the boundary node and its
    /// mirror image; adds nothing to the Laplacian.
    NeumannMid,
    /// Zero value at the midpoint to an external node joined with weight
    /// `w`; becomes a self-loop of weight `2w`.
    DirichletMid(f64),
}

fn sign(w: f64) -> i8 {
    if w > 0.0 {
        1
    } else if w < 0.0 {
        -1
    } else {
        0
    }
}

/// `L = D - W + diag(W)`: off-diagonal `-W_ij`, diagonal
/// `sum_{j != i} W_ij + W_ii`.
pub fn generalized_laplacian(g: &SignedGraph) -> SparseSymMatrix {
    laplacian_with_loops(g, g.self_loops())
}

/// `L = D - W`; self-loops cancel, so rows sum to zero.
pub fn combinatorial_laplacian(g: &SignedGraph) -> SparseSymMatrix {
    laplacian_with_loops(g, &vec![0.0; g.n()])
}

fn laplacian_with_loops(g: &SignedGraph, loops: &[f64]) -> SparseSymMatrix {
    let mut diag = loops.to_vec();
    let mut entries = Vec::with_capacity(g.edge_count() + g.n());
    for e in g.edges() {
        diag[e.i] += e.w;
        diag[e.j] += e.w;
        entries.push((e.i, e.j, -e.w));
    }
    entries.extend(diag.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    SparseSymMatrix::from_entries(g.n(), entries).expect("indices validated at graph construction")
}

/// Graph Laplacian regularizer `x^T L x`.
pub fn glr(l: &SparseSymMatrix, x: &[f64]) -> Result<f64> {
    l.quad_form(x)
}

/// `sum_{(i,j)} W_ij (x_i - x_j)^2 + sum_i W_ii x_i^2`, evaluated edge by edge.
pub fn glr_edge_sum(g: &SignedGraph, x: &[f64]) -> Result<f64> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: x.len(),
        });
    }
    let edges: f64 = g
        .edges()
        .iter()
        .map(|e| e.w * (x[e.i] - x[e.j]).powi(2))
        .sum();
    let loops: f64 = g.self_loops().iter().zip(x).map(|(w, v)| w * v * v).sum();
    Ok(edges + loops)
}

/// Two-coloring certificate of balance, or `None` when some cycle carries an
/// odd number of negative edges.
///
/// BFS per connected component, rooted at the component's lowest index with
/// color `+1`; a positive edge copies the color, a negative edge flips it.
pub fn is_balanced(g: &SignedGraph) -> Option<Coloring> {
    let mut beta = vec![0i8; g.n()];
    for root in 0..g.n() {
        if beta[root] != 0 {
            continue;
        }
        beta[root] = 1;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, w) in g.neighbors(u) {
                let want = sign(w) * beta[u];
                if beta[v] == 0 {
                    beta[v] = want;
                    queue.push_back(v);
                } else if beta[v] != want {
                    return None;
                }
            }
        }
    }
    Some(Coloring(beta))
}

/// `beta_i beta_j sign(W_ij)`: `+1` for a consistent edge, `-1` otherwise.
pub fn edge_consistency(g: &SignedGraph, c: &Coloring, i: usize, j: usize) -> Result<i8> {
    if c.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: c.len(),
        });
    }
    if i >= g.n() || j >= g.n() {
        return Err(Error::MissingEdge { i, j });
    }
    let w = g.weight(i, j).ok_or(Error::MissingEdge { i, j })?;
    Ok(c.get(i) * c.get(j) * sign(w))
}

/// Positive graph with `W'_ij = beta_i beta_j W_ij`; self-loops unchanged.
///
/// Positive graph with `W'_ij = beta_i beta_j W_ij`.
///
/// Degrees are signed row sums, so flipping an edge moves `2|W_ij|` of
/// each endpoint's diagonal into its self-loop. This keeps
/// `L' = T L T` with `T = diag(beta)`: both Laplacians share a spectrum
/// and `v_k = T v'_k`.
pub fn signed_switch(g: &SignedGraph, c: &Coloring) -> Result<SignedGraph> {
    if c.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: c.len(),
        });
    }
    let mut edges = Vec::with_capacity(g.edge_count());
    let mut loops = g.self_loops().to_vec();
    for e in g.edges() {
        let w = f64::from(c.get(e.i) * c.get(e.j)) * e.w;
        if w <= 0.0 {
            return Err(Error::InvalidColoring { i: e.i, j: e.j });
        }
        if e.w < 0.0 {
            loops[e.i] += 2.0 * e.w;
            loops[e.j] += 2.0 * e.w;
        }
        edges.push(Edge { w, ..*e });
    }
    Ok(SignedGraph::from_sorted(g.n(), edges, loops))
}

/// Second-difference matrix of an `n`-node path as a generalized Laplacian.
pub fn second_difference(
    n: usize,
    left: BoundaryCondition,
    right: BoundaryCondition,
    weights: &[f64],
) -> Result<SparseSymMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput("a path needs at least two nodes".into()));
    }
    if weights.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: weights.len(),
        });
    }
    if let Some(k) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput(format!("path weight {k} is not positive")));
    }
    let mut loops = vec![0.0; n];
    for (end, bc) in [(0, left), (n - 1, right)] {
        if let BoundaryCondition::DirichletMid(w) = bc {
            if !(w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "Dirichlet weight must be positive, got {w}"
                )));
            }
            loops[end] += 2.0 * w;
        }
    }
    let g = SignedGraph::from_edges(n, weights.iter().enumerate().map(|(k, &w)| (k, k + 1, w)))?
        .with_self_loops(loops)?;
    Ok(generalized_laplacian(&g))
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Number of strong nodal domains of `x`.
///
/// A domain is a maximal connected set of nodes with `x_i != 0` joined by
/// edges satisfying `sign(x_i) sign(x_j) = sign(W_ij)`. On positive graphs
/// this is the usual same-sign rule. Zero entries belong to no domain.
pub fn nodal_domains(g: &SignedGraph, x: &[f64]) -> Result<usize> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: x.len(),
        });
    }
    let mut dsu = DisjointSet::new(g.n());
    for e in g.edges() {
        let (si, sj) = (sign(x[e.i]), sign(x[e.j]));
        if si != 0 && sj != 0 && si * sj == sign(e.w) {
            dsu.union(e.i, e.j);
        }
    }
    let mut roots: Vec<usize> = (0..g.n())
        .filter(|&i| x[i] != 0.0)
        .map(|i| dsu.find(i))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots.len())
}

/// Maximally sign-smooth: every edge has nonzero endpoints with
/// `sign(x_i) = sign(W_ij) sign(x_j)`.
pub fn is_ms(g: &SignedGraph, x: &[f64]) -> bool {
    x.len() == g.n()
        && g.edges().iter().all(|e| {
            let (si, sj) = (sign(x[e.i]), sign(x[e.j]));
            si != 0 && sj != 0 && si == sign(e.w) * sj
        })
}
