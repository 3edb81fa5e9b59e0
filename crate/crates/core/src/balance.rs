//! Greedy balancing of a signed graph.
//!
//! Starting from a seed node, nodes are added one at a time to a bi-colored
//! set `S`. The next node is the endpoint of the largest-magnitude edge
//! between `S` and its one-hop frontier `C`; it takes the color that makes
//! that edge consistent. Its remaining inconsistent edges into `S` are then
//! removed so that `L - L_B` stays positive semidefinite for the
//! combinatorial Laplacians:
//!
//! * inconsistent positive edges are dropped outright and remembered in
//!   `G^d`;
//! * an inconsistent negative edge `(j, i)` is dropped for free when `G^d`
//!   holds two removed positive edges `(k, j)`, `(k, i)` with weights at
//!   least `-2 W_ji` (Case 1), which are then consumed;
//! * otherwise an opposite-colored `k` in `S` absorbs it: `(k, j)` and
//!   `(k, i)` (created at zero if absent) each gain `2 W_ji` before `(j, i)`
//!   is removed (Case 2);
//! * if `S` is monochromatic, `j` is recolored opposite to `S` instead and
//!   its now-inconsistent positive edges are dropped.
//!
//! Self-loops are never touched.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Coloring, Edge, SignedGraph};

/// How Case 2 picks the opposite-colored pivot `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotPolicy {
    #[default]
    SmallestIndex,
    /// Uniform choice from a seeded stream.
    Seeded(u64),
}

#[derive(Debug, Clone, Default)]
pub struct BalanceOptions {
    pub seed: usize,
    pub pivot: PivotPolicy,
    /// Keep the per-operation edge changes in [`BalanceReport::steps`].
    pub record_steps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeCase {
    Case1,
    Case2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeRemoval {
    pub edge: Edge,
    pub case: NegativeCase,
    pub pivot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub edge: (usize, usize),
    pub old_w: f64,
    pub new_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recoloring {
    pub node: usize,
    /// The inconsistent negative edge that found `S` monochromatic.
    pub trigger: Edge,
}

/// One weight change; `old_w == 0` is a creation, `new_w == 0` a removal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeChange {
    pub i: usize,
    pub j: usize,
    pub old_w: f64,
    pub new_w: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub removed_positive: Vec<Edge>,
    pub removed_negative: Vec<NegativeRemoval>,
    pub augmented: Vec<Augmentation>,
    pub recolored: Vec<Recoloring>,
    pub iterations: usize,
    /// Atomic edge operations in execution order; filled only when
    /// requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<Vec<EdgeChange>>,
}

impl BalanceReport {
    /// True when no edge was removed, augmented or recolored around.
    pub fn is_empty(&self) -> bool {
        self.removed_positive.is_empty()
            && self.removed_negative.is_empty()
            && self.augmented.is_empty()
            && self.recolored.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BalanceOutcome {
    pub graph: SignedGraph,
    pub coloring: Coloring,
    pub report: BalanceReport,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    magnitude: f64,
    /// frontier node
    j: usize,
    /// node in S
    i: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // max-heap order: larger magnitude first, then smaller j, then smaller i
    fn cmp(&self, other: &Self) -> Ordering {
        self.magnitude
            .total_cmp(&other.magnitude)
            .then_with(|| other.j.cmp(&self.j))
            .then_with(|| other.i.cmp(&self.i))
    }
}

/// Outcome of [`BalanceState::case2_remove`].
#[derive(Debug, Clone, PartialEq)]
pub enum Case2Outcome {
    Augmented { pivot: usize },
    Recolored { removed_positive: Vec<Edge> },
}

/// Mutable state of one balancing run.
///
/// The frontier maximum is kept in a lazy max-heap: an edge between `C` and
/// `S` can only change when one endpoint joins `S`, at which point its heap
/// entry becomes stale and is skipped.
#[derive(Debug, Clone)]
pub struct BalanceState {
    work: Vec<BTreeMap<usize, f64>>,
    color: Vec<i8>,
    in_s: Vec<bool>,
    red: BTreeSet<usize>,
    blue: BTreeSet<usize>,
    frontier: BTreeSet<usize>,
    heap: BinaryHeap<Candidate>,
    removed: Vec<BTreeMap<usize, f64>>,
    pivot_rng: Option<ChaCha8Rng>,
    record_steps: bool,
    report: BalanceReport,
}

impl BalanceState {
    /// Puts `opts.seed` in `S` with color `+1`.
    pub fn new(g: &SignedGraph, opts: &BalanceOptions) -> Result<Self> {
        if g.n() == 0 {
            return Err(Error::InvalidInput("graph has no nodes".into()));
        }
        if opts.seed >= g.n() {
            return Err(Error::InvalidInput(format!(
                "seed node {} outside a graph of {} nodes",
                opts.seed,
                g.n()
            )));
        }
        let mut work = vec![BTreeMap::new(); g.n()];
        for e in g.edges() {
            work[e.i].insert(e.j, e.w);
            work[e.j].insert(e.i, e.w);
        }
        let mut state = BalanceState {
            work,
            color: vec![0; g.n()],
            in_s: vec![false; g.n()],
            red: BTreeSet::new(),
            blue: BTreeSet::new(),
            frontier: BTreeSet::new(),
            heap: BinaryHeap::new(),
            removed: vec![BTreeMap::new(); g.n()],
            pivot_rng: match opts.pivot {
                PivotPolicy::SmallestIndex => None,
                PivotPolicy::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
            },
            record_steps: opts.record_steps,
            report: BalanceReport::default(),
        };
        state.color[opts.seed] = 1;
        state.admit(opts.seed);
        Ok(state)
    }

    pub fn in_s(&self, v: usize) -> bool {
        self.in_s[v]
    }

    /// Current color, `0` while the node is outside `S`.
    pub fn color(&self, v: usize) -> i8 {
        self.color[v]
    }

    pub fn frontier(&self) -> &BTreeSet<usize> {
        &self.frontier
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.work[a].get(&b).copied()
    }

    /// Weight of `(a, b)` in the graph of removed positive edges.
    pub fn removed_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.removed[a].get(&b).copied()
    }

    pub fn report(&self) -> &BalanceReport {
        &self.report
    }

    fn admit(&mut self, j: usize) {
        self.in_s[j] = true;
        self.frontier.remove(&j);
        if self.color[j] > 0 {
            self.blue.insert(j);
        } else {
            self.red.insert(j);
        }
        for (&v, &w) in &self.work[j] {
            if !self.in_s[v] {
                self.frontier.insert(v);
                self.heap.push(Candidate {
                    magnitude: w.abs(),
                    j: v,
                    i: j,
                });
            }
        }
    }

    /// `argmax_{j in C, i in S} |W_ji|`, ties to the smaller `j`, then the
    /// smaller `i`.
    pub fn select_next(&mut self) -> Result<(usize, usize)> {
        while let Some(top) = self.heap.peek().copied() {
            let live = !self.in_s[top.j]
                && self.work[top.j].get(&top.i).map(|w| w.abs()) == Some(top.magnitude);
            if live {
                return Ok((top.j, top.i));
            }
            self.heap.pop();
        }
        Err(Error::InvalidInput("frontier is empty".into()))
    }

    fn set_weight(&mut self, a: usize, b: usize, w: f64) -> f64 {
        let old = if w == 0.0 {
            self.work[a].remove(&b);
            self.work[b].remove(&a)
        } else {
            self.work[a].insert(b, w);
            self.work[b].insert(a, w)
        };
        old.unwrap_or(0.0)
    }

    fn record(&mut self, changes: Vec<EdgeChange>) {
        if self.record_steps {
            self.report.steps.push(changes);
        }
    }

    fn change(a: usize, b: usize, old_w: f64, new_w: f64) -> EdgeChange {
        EdgeChange {
            i: a.min(b),
            j: a.max(b),
            old_w,
            new_w,
        }
    }

    /// Drops every positive edge from `j` into `S` whose endpoints have
    /// different colors, moving it into `G^d`.
    pub fn remove_inconsistent_positive(&mut self, j: usize) -> Vec<Edge> {
        let cj = self.color[j];
        let doomed: Vec<(usize, f64)> = self.work[j]
            .iter()
            .filter(|&(&i, &w)| self.in_s[i] && w > 0.0 && self.color[i] != cj)
            .map(|(&i, &w)| (i, w))
            .collect();
        let mut out = Vec::with_capacity(doomed.len());
        for (i, w) in doomed {
            self.set_weight(j, i, 0.0);
            self.removed[j].insert(i, w);
            self.removed[i].insert(j, w);
            let edge = Edge {
                i: i.min(j),
                j: i.max(j),
                w,
            };
            self.report.removed_positive.push(edge);
            self.record(vec![Self::change(i, j, w, 0.0)]);
            out.push(edge);
        }
        out
    }

    /// Case 1: removes the inconsistent negative edge `(j, i)` when `G^d`
    /// holds `(k, j)` and `(k, i)`, both of weight at least `-2 W_ji`. The
    /// smallest qualifying `k` is used and its two edges leave `G^d`.
    pub fn try_case1(&mut self, j: usize, i: usize) -> bool {
        let w = match self.work[j].get(&i) {
            Some(&w) if w < 0.0 => w,
            _ => return false,
        };
        let need = -2.0 * w;
        let pivot = self.removed[j]
            .iter()
            .filter(|&(_, &wkj)| wkj >= need)
            .map(|(&k, _)| k)
            .find(|k| self.removed[i].get(k).is_some_and(|&wki| wki >= need));
        let Some(k) = pivot else {
            return false;
        };
        for a in [j, i] {
            self.removed[a].remove(&k);
            self.removed[k].remove(&a);
        }
        self.set_weight(j, i, 0.0);
        self.report.removed_negative.push(NegativeRemoval {
            edge: Edge {
                i: i.min(j),
                j: i.max(j),
                w,
            },
            case: NegativeCase::Case1,
            pivot: k,
        });
        self.record(vec![Self::change(j, i, w, 0.0)]);
        true
    }

    fn pick_pivot(&mut self, want: i8) -> Option<usize> {
        let set = if want > 0 { &self.blue } else { &self.red };
        if set.is_empty() {
            return None;
        }
        match self.pivot_rng.as_mut() {
            None => set.iter().next().copied(),
            Some(rng) => {
                let idx = rng.random_range(0..set.len());
                set.iter().nth(idx).copied()
            }
        }
    }

    /// Case 2 for the inconsistent negative edge `(j, i)`.
    ///
    /// With an opposite-colored `k` in `S`, `(k, j)` and `(k, i)` each gain
    /// `2 W_ji` (created at zero when absent) and `(j, i)` is removed. With
    /// `S` monochromatic, `j` is recolored and its inconsistent positive
    /// edges are removed instead; no negative edge is touched.
    pub fn case2_remove(&mut self, j: usize, i: usize) -> Case2Outcome {
        let w = self.work[j][&i];
        let trigger = Edge {
            i: i.min(j),
            j: i.max(j),
            w,
        };
        let Some(k) = self.pick_pivot(-self.color[i]) else {
            self.color[j] = -self.color[j];
            self.report.recolored.push(Recoloring { node: j, trigger });
            let removed_positive = self.remove_inconsistent_positive(j);
            return Case2Outcome::Recolored { removed_positive };
        };
        let mut changes = Vec::with_capacity(3);
        for a in [j, i] {
            let old = self.work[k].get(&a).copied().unwrap_or(0.0);
            let new = old + 2.0 * w;
            self.set_weight(k, a, new);
            self.report.augmented.push(Augmentation {
                edge: (k.min(a), k.max(a)),
                old_w: old,
                new_w: new,
            });
            changes.push(Self::change(k, a, old, new));
        }
        self.set_weight(j, i, 0.0);
        changes.push(Self::change(j, i, w, 0.0));
        self.report.removed_negative.push(NegativeRemoval {
            edge: trigger,
            case: NegativeCase::Case2,
            pivot: k,
        });
        self.record(changes);
        Case2Outcome::Augmented { pivot: k }
    }

    /// Colors `j` through the edge `(j, i)`, repairs its remaining
    /// inconsistent edges into `S`, and moves it into `S`.
    pub fn add_node(&mut self, j: usize, i: usize) {
        let w = self.work[j][&i];
        self.color[j] = if w > 0.0 { self.color[i] } else { -self.color[i] };
        self.remove_inconsistent_positive(j);

        let mut negatives: Vec<(usize, f64)> = self.work[j]
            .iter()
            .filter(|&(&v, &w)| self.in_s[v] && w < 0.0 && self.color[v] == self.color[j])
            .map(|(&v, &w)| (v, w))
            .collect();
        // cheapest distortion first
        negatives.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
        for (v, _) in negatives {
            let still_inconsistent = self.work[j].get(&v).is_some_and(|&w| w < 0.0)
                && self.color[v] == self.color[j];
            if !still_inconsistent || self.try_case1(j, v) {
                continue;
            }
            if let Case2Outcome::Recolored { .. } = self.case2_remove(j, v) {
                break;
            }
        }
        self.admit(j);
        self.report.iterations += 1;
    }

    /// Starts a new component at its lowest-index node, colored `+1`.
    fn restart(&mut self) -> bool {
        match self.in_s.iter().position(|&s| !s) {
            Some(root) => {
                self.color[root] = 1;
                self.admit(root);
                true
            }
            None => false,
        }
    }

    fn into_outcome(self, g: &SignedGraph) -> Result<BalanceOutcome> {
        let mut edges = Vec::new();
        for (a, row) in self.work.iter().enumerate() {
            for (&b, &w) in row.range(a + 1..) {
                if w != 0.0 {
                    edges.push((a, b, w));
                }
            }
        }
        let graph = SignedGraph::from_edges(g.n(), edges)?.with_self_loops(g.self_loops().to_vec())?;
        Ok(BalanceOutcome {
            graph,
            coloring: Coloring::new(self.color)?,
            report: self.report,
        })
    }

    fn run(mut self, g: &SignedGraph, allow_restart: bool) -> Result<BalanceOutcome> {
        loop {
            match self.select_next() {
                Ok((j, i)) => self.add_node(j, i),
                Err(_) => {
                    if self.in_s.iter().all(|&s| s) {
                        break;
                    }
                    if !allow_restart {
                        return Err(Error::Disconnected {
                            components: g.components().len(),
                        });
                    }
                    self.restart();
                }
            }
        }
        self.into_outcome(g)
    }
}

/// Balances a connected graph starting from `seed`.
pub fn balance(g: &SignedGraph, seed: usize) -> Result<BalanceOutcome> {
    balance_with(
        g,
        &BalanceOptions {
            seed,
            ..BalanceOptions::default()
        },
    )
}

/// [`balance`] with explicit options. Disconnected input is an error.
pub fn balance_with(g: &SignedGraph, opts: &BalanceOptions) -> Result<BalanceOutcome> {
    BalanceState::new(g, opts)?.run(g, false)
}

/// Balances every connected component independently: the seed's component
/// first, then each remaining component from its lowest-index node.
pub fn balance_components(g: &SignedGraph, opts: &BalanceOptions) -> Result<BalanceOutcome> {
    BalanceState::new(g, opts)?.run(g, true)
}
