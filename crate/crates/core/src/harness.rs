//! Synthetic data, noise models, baselines and the experiment runner.
//!
//! A run loads one dataset, then repeats the pipeline for every trial:
//! random train/test split, covariance, graphical lasso, graph balancing,
//! disc alignment, sample selection for each sampler and budget, and
//! reconstruction of every test signal under every noise level. Each trial
//! draws from its own stream of the master seed, so results do not depend
//! on the order in which trials run.
//!
//! Wall-times are kept apart from the result rows so that the CSV and JSON
//! outputs are byte-identical for a fixed seed.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::balance::{balance_components, BalanceOptions};
use crate::error::{Error, Result};
use crate::gdpa_gdas::{gdas_sample, gdpa_align_components};
use crate::graph::{generalized_laplacian, is_balanced, SignedGraph};
use crate::learn::{
    glasso, precision_to_graph, regularized_covariance, GlassoOptions, SignalMatrix, DEFAULT_PRUNE,
};
use crate::linalg::{dense_eig, SparseSymMatrix};
use crate::reconstruct::{deltacon, mse, reconstruct, relative_error, ReconstructionProblem, DELTACON_EPS};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Parameters of [`generate_balanced_graph`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphParams {
    pub n: usize,
    pub avg_degree: f64,
    /// Range of `|w|`, both ends positive.
    pub weight_range: [f64; 2],
    /// Share of nodes colored `-1`.
    pub neg_fraction: f64,
}

/// Connected random graph that is balanced by construction.
///
/// Nodes are colored first (`round(neg_fraction n)` of them `-1`), a random
/// spanning tree guarantees connectivity, and random extra pairs bring the
/// edge count to `round(avg_degree n / 2)`. Every edge takes the sign
/// `beta_i beta_j`.
pub fn generate_balanced_graph(p: &GraphParams, seed: u64) -> Result<SignedGraph> {
    let n = p.n;
    if n == 0 {
        return Err(invalid("graph needs at least one node"));
    }
    if !(p.avg_degree >= 0.0) || p.avg_degree >= n.max(2) as f64 {
        return Err(invalid(format!(
            "average degree {} must lie in [0, n = {n})",
            p.avg_degree
        )));
    }
    let [lo, hi] = p.weight_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(invalid(format!("weight range [{lo}, {hi}] must be positive and ordered")));
    }
    if !(0.0..=1.0).contains(&p.neg_fraction) {
        return Err(invalid(format!("neg_fraction {} outside [0, 1]", p.neg_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reds = (p.neg_fraction * n as f64).round() as usize;
    let mut color = vec![1.0; n];
    for i in index::sample(&mut rng, n, reds) {
        color[i] = -1.0;
    }

    let max_edges = n * (n - 1) / 2;
    let target = ((p.avg_degree * n as f64 / 2.0).round() as usize).clamp(n - 1, max_edges);
    let mut pairs = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        pairs.insert((parent.min(child), parent.max(child)));
    }
    while pairs.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j)| {
            let w = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            (i, j, color[i] * color[j] * w)
        })
        .collect();
    SignedGraph::from_edges(n, edges)
}

/// Flips the sign of `flip_count` distinct random edges, redrawing the
/// choice until the result is unbalanced.
///
/// Fails when no choice of `flip_count` edges unbalances the graph (for
/// instance on a tree) within a bounded number of redraws.
pub fn perturb_to_unbalanced(g: &SignedGraph, flip_count: usize, seed: u64) -> Result<SignedGraph> {
    let m = g.edge_count();
    if flip_count == 0 {
        return Ok(g.clone());
    }
    if flip_count > m {
        return Err(invalid(format!("cannot flip {flip_count} of {m} edges")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 100;
    for _ in 0..ATTEMPTS {
        let flip: BTreeSet<usize> = index::sample(&mut rng, m, flip_count).into_iter().collect();
        let edges = g
            .edges()
            .iter()
            .enumerate()
            .map(|(k, e)| (e.i, e.j, if flip.contains(&k) { -e.w } else { e.w }));
        let out = SignedGraph::from_edges(g.n(), edges)?.with_self_loops(g.self_loops().to_vec())?;
        if is_balanced(&out).is_none() {
            return Ok(out);
        }
    }
    Err(invalid(format!(
        "no flip of {flip_count} edges unbalanced the graph in {ATTEMPTS} draws"
    )))
}

/// `count` draws from `N(0, (L + delta I)^{-1})` through the Cholesky
/// factor `L + delta I = R R^T`: `x = R^{-T} z` with `z` standard normal.
pub fn gmrf_sample(l: &SparseSymMatrix, delta: f64, count: usize, seed: u64) -> Result<SignalMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gmrf_sample_rng(l, delta, count, &mut rng)
}

fn gmrf_sample_rng<R: Rng>(
    l: &SparseSymMatrix,
    delta: f64,
    count: usize,
    rng: &mut R,
) -> Result<SignalMatrix> {
    let n = l.n();
    let mut q = l.to_dense();
    for i in 0..n {
        q[(i, i)] += delta;
    }
    let chol = Cholesky::new(q).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("precision plus {delta} I is not positive definite"))
    })?;
    let rt = chol.l().transpose();
    let mut data = DMatrix::zeros(count, n);
    for s in 0..count {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = rt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Singular("Cholesky factor is singular".into()))?;
        data.row_mut(s).copy_from(&x.transpose());
    }
    SignalMatrix::new(data, None)
}

/// Noise applied to observed entries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoiseModel {
    #[default]
    None,
    /// With probability `p`, move an entry to a different value of its
    /// column's alphabet.
    Flip(f64),
    /// Add `N(0, sigma^2)`.
    Gauss(f64),
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| invalid(format!("bad noise parameter {v:?}: {e}")))
        };
        let model = match s.split_once(':') {
            None if s == "none" => NoiseModel::None,
            Some(("flip", v)) => NoiseModel::Flip(parse(v)?),
            Some(("gauss", v)) => NoiseModel::Gauss(parse(v)?),
            _ => return Err(invalid(format!("unknown noise {s:?}; use none, flip:p or gauss:sigma"))),
        };
        model.validate()?;
        Ok(model)
    }
}

impl TryFrom<String> for NoiseModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoiseModel> for String {
    fn from(m: NoiseModel) -> String {
        m.to_string()
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::None => write!(f, "none"),
            NoiseModel::Flip(p) => write!(f, "flip:{p}"),
            NoiseModel::Gauss(s) => write!(f, "gauss:{s}"),
        }
    }
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Flip(p) if !(0.0..=1.0).contains(&p) => {
                Err(invalid(format!("flip probability {p} outside [0, 1]")))
            }
            NoiseModel::Gauss(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(invalid(format!("noise deviation {s} must be nonnegative")))
            }
            _ => Ok(()),
        }
    }
}

/// Distinct values of each column, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet(Vec<Vec<f64>>);

impl Alphabet {
    pub fn from_signals(x: &SignalMatrix) -> Self {
        let cols = (0..x.n_nodes())
            .map(|c| {
                let mut v: Vec<f64> = x.data().column(c).iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        Alphabet(cols)
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.0[c]
    }
}

/// Applies `model` to every entry; flips draw from `alphabet`.
pub fn add_noise_with<R: Rng>(
    x: &SignalMatrix,
    model: NoiseModel,
    alphabet: &Alphabet,
    rng: &mut R,
) -> Result<SignalMatrix> {
    model.validate()?;
    if alphabet.0.len() != x.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: x.n_nodes(),
            found: alphabet.0.len(),
        });
    }
    let mut data = x.data().clone();
    match model {
        NoiseModel::None => {}
        NoiseModel::Gauss(sigma) => {
            for s in 0..data.nrows() {
                for c in 0..data.ncols() {
                    data[(s, c)] += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        NoiseModel::Flip(p) => {
            for s in 0..data.nrows() {
                for c in 0..data.ncols() {
                    if rng.random::<f64>() >= p {
                        continue;
                    }
                    let v = data[(s, c)];
                    let others: Vec<f64> =
                        alphabet.column(c).iter().copied().filter(|&a| a != v).collect();
                    if !others.is_empty() {
                        data[(s, c)] = others[rng.random_range(0..others.len())];
                    }
                }
            }
        }
    }
    SignalMatrix::new(data, x.labels().map(<[String]>::to_vec))
}

/// [`add_noise_with`] using the alphabet of `x` itself.
pub fn add_noise(x: &SignalMatrix, model: NoiseModel, seed: u64) -> Result<SignalMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(x, model, &Alphabet::from_signals(x), &mut rng)
}

/// Parses comma-separated signals, one per row. With `header`, the first
/// row holds node labels.
pub fn read_csv<R: Read>(r: R, header: bool) -> Result<SignalMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let labels = if header {
        let h = reader.headers().map_err(csv_error)?;
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: Result<Vec<f64>> = rec
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("non-numeric cell {cell:?}: {e}"),
                })
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(invalid("no signal rows"));
    }
    let n = rows[0].len();
    let data = DMatrix::from_fn(rows.len(), n, |s, i| rows[s][i]);
    SignalMatrix::new(data, labels)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            line,
            message: format!("row has {len} cells, expected {expected_len}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn ingest_csv(path: &Path, header: bool) -> Result<SignalMatrix> {
    read_csv(std::fs::File::open(path)?, header)
}

/// Writes signals in the format [`read_csv`] accepts, 17 significant
/// digits.
pub fn write_csv<W: Write>(x: &SignalMatrix, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if let Some(labels) = x.labels() {
        wr.write_record(labels).map_err(csv_error)?;
    }
    for s in 0..x.n_signals() {
        wr.write_record(x.data().row(s).iter().map(|v| format!("{v:.16e}")))
            .map_err(csv_error)?;
    }
    wr.flush()?;
    Ok(())
}

/// `M` nodes uniformly without replacement, ascending.
pub fn baseline_random<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m > n {
        return Err(invalid(format!("budget {m} exceeds {n} nodes")));
    }
    let mut v = index::sample(rng, n, m).into_vec();
    v.sort_unstable();
    Ok(v)
}

/// The `M` nodes of largest `sum_j |W_ij|`, ties to the smaller index.
pub fn baseline_degree_greedy(g: &SignedGraph, m: usize) -> Result<Vec<usize>> {
    if m > g.n() {
        return Err(invalid(format!("budget {m} exceeds {} nodes", g.n())));
    }
    let deg: Vec<f64> = (0..g.n()).map(|i| g.abs_degree(i)).collect();
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]).then(a.cmp(&b)));
    order.truncate(m);
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Proposed,
    Random,
    DegreeGreedy,
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampler::Proposed => "proposed",
            Sampler::Random => "random",
            Sampler::DegreeGreedy => "degree_greedy",
        })
    }
}

/// Laplacian used in the reconstruction system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructWith {
    #[default]
    Learned,
    Balanced,
}

/// Synthetic source: balanced graph, sign flips, then GMRF draws from the
/// generalized Laplacian of the flipped graph shifted so that its smallest
/// eigenvalue is `eig_floor`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n: usize,
    pub avg_degree: f64,
    pub weight_range: [f64; 2],
    pub neg_fraction: f64,
    #[serde(default)]
    pub flip_count: usize,
    #[serde(default = "default_signals")]
    pub signals: usize,
    #[serde(default = "default_eig_floor")]
    pub eig_floor: f64,
    /// Dataset seed; the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_signals() -> usize {
    300
}

fn default_eig_floor() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Synthetic(SyntheticSource),
    Csv {
        path: PathBuf,
        #[serde(default)]
        header: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub budgets: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise: Vec<NoiseModel>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<Sampler>,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Relative residual for reconstruction.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_glasso_tol")]
    pub glasso_tol: f64,
    #[serde(default = "default_glasso_max_iter")]
    pub glasso_max_iter: usize,
    #[serde(default)]
    pub reconstruct_with: ReconstructWith,
}

fn default_phi() -> f64 {
    0.05
}
fn default_mu() -> f64 {
    0.01
}
fn default_noise() -> Vec<NoiseModel> {
    vec![NoiseModel::None]
}
fn default_trials() -> usize {
    1
}
fn default_samplers() -> Vec<Sampler> {
    vec![Sampler::Proposed, Sampler::Random, Sampler::DegreeGreedy]
}
fn default_split() -> f64 {
    0.9
}
fn default_tol() -> f64 {
    1e-10
}
fn default_glasso_tol() -> f64 {
    1e-4
}
fn default_glasso_max_iter() -> usize {
    100
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(source: Source, budgets: Vec<usize>) -> Self {
        ExperimentConfig {
            source,
            seed: 0,
            phi: default_phi(),
            mu: default_mu(),
            budgets,
            noise: default_noise(),
            trials: default_trials(),
            samplers: default_samplers(),
            split_fraction: default_split(),
            tol: default_tol(),
            glasso_tol: default_glasso_tol(),
            glasso_max_iter: default_glasso_max_iter(),
            reconstruct_with: ReconstructWith::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(invalid(format!("split_fraction {} outside (0, 1)", self.split_fraction)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(invalid(format!("phi must be nonnegative, got {}", self.phi)));
        }
        if self.budgets.is_empty() || self.samplers.is_empty() || self.noise.is_empty() {
            return Err(invalid("budgets, samplers and noise must be nonempty"));
        }
        for m in &self.noise {
            m.validate()?;
        }
        if let Source::Synthetic(s) = &self.source {
            if let Some(&b) = self.budgets.iter().find(|&&b| b > s.n) {
                return Err(invalid(format!("budget {b} exceeds {} nodes", s.n)));
            }
        }
        Ok(())
    }
}

/// Signals of a run, plus the graph behind them when synthetic.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub signals: SignalMatrix,
    pub truth: Option<SignedGraph>,
}

/// Builds the dataset named by the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.source {
        Source::Csv { path, header } => Ok(Dataset {
            signals: ingest_csv(path, *header)?,
            truth: None,
        }),
        Source::Synthetic(s) => {
            let seed = s.seed.unwrap_or(cfg.seed);
            let params = GraphParams {
                n: s.n,
                avg_degree: s.avg_degree,
                weight_range: s.weight_range,
                neg_fraction: s.neg_fraction,
            };
            let balanced = generate_balanced_graph(&params, seed)?;
            let g = perturb_to_unbalanced(&balanced, s.flip_count, seed.wrapping_add(1))?;
            let l = generalized_laplacian(&g);
            let shift = s.eig_floor - dense_eig(&l)?.min();
            let signals = gmrf_sample(&l, shift, s.signals, seed.wrapping_add(2))?;
            Ok(Dataset {
                signals,
                truth: Some(g),
            })
        }
    }
}

/// One (sampler, budget, noise, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sampler: Sampler,
    pub budget: usize,
    pub noise: NoiseModel,
    pub trial: usize,
    /// Mean over the trial's test signals.
    pub mse: Option<f64>,
    pub samples: Vec<usize>,
    /// Certified threshold, proposed sampler only.
    pub t_final: Option<f64>,
    pub error: Option<String>,
}

/// Learned-versus-balanced graph comparison for one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialGraphStats {
    pub trial: usize,
    pub re: Option<f64>,
    pub dcs: Option<f64>,
    pub edges_learned: usize,
    pub edges_balanced: usize,
    pub error: Option<String>,
}

/// Wall-times in seconds for one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub trial: usize,
    pub covariance: f64,
    pub glasso: f64,
    pub balance: f64,
    pub align: f64,
    pub sample: f64,
    pub reconstruct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub sampler: Sampler,
    pub budget: usize,
    pub noise: NoiseModel,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
    pub t_final_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub signals: usize,
    pub trials: usize,
    pub cells: Vec<CellSummary>,
    pub re_mean: Option<f64>,
    pub dcs_mean: Option<f64>,
    pub graphs: Vec<TrialGraphStats>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub n: usize,
    pub signals: usize,
    pub trials: usize,
    /// Ordered by sampler (config order), budget, noise, trial.
    pub rows: Vec<ResultRow>,
    pub graphs: Vec<TrialGraphStats>,
    pub timings: Vec<StageTimes>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (Some(m), Some(var.sqrt()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

impl ExperimentResult {
    /// Rows of one cell across trials.
    pub fn cell(&self, sampler: Sampler, budget: usize, noise: NoiseModel) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.sampler == sampler && r.budget == budget && r.noise == noise)
            .collect()
    }

    /// Mean MSE of a cell over the trials that succeeded.
    pub fn mean_mse(&self, sampler: Sampler, budget: usize, noise: NoiseModel) -> Option<f64> {
        let v: Vec<f64> = self.cell(sampler, budget, noise).iter().filter_map(|r| r.mse).collect();
        mean_std(&v).0
    }

    pub fn summary(&self) -> Summary {
        let mut cells: Vec<CellSummary> = Vec::new();
        for r in &self.rows {
            if cells
                .iter()
                .any(|c| c.sampler == r.sampler && c.budget == r.budget && c.noise == r.noise)
            {
                continue;
            }
            let rows = self.cell(r.sampler, r.budget, r.noise);
            let ok: Vec<f64> = rows.iter().filter_map(|x| x.mse).collect();
            let t: Vec<f64> = rows.iter().filter_map(|x| x.t_final).collect();
            let (mse_mean, mse_std) = mean_std(&ok);
            cells.push(CellSummary {
                sampler: r.sampler,
                budget: r.budget,
                noise: r.noise,
                trials_ok: ok.len(),
                trials_failed: rows.len() - ok.len(),
                mse_mean,
                mse_std,
                t_final_mean: mean_std(&t).0,
            });
        }
        let re: Vec<f64> = self.graphs.iter().filter_map(|g| g.re).collect();
        let dcs: Vec<f64> = self.graphs.iter().filter_map(|g| g.dcs).collect();
        Summary {
            n: self.n,
            signals: self.signals,
            trials: self.trials,
            cells,
            re_mean: mean_std(&re).0,
            dcs_mean: mean_std(&dcs).0,
            graphs: self.graphs.clone(),
        }
    }

    /// Long-format CSV, one line per cell and trial.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "sampler", "budget", "noise", "trial", "mse", "n_samples", "samples", "t_final", "re",
            "dcs", "error",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            let g = self.graphs.iter().find(|g| g.trial == r.trial);
            let samples: Vec<String> = r.samples.iter().map(usize::to_string).collect();
            wr.write_record([
                r.sampler.to_string(),
                r.budget.to_string(),
                r.noise.to_string(),
                r.trial.to_string(),
                fmt_opt(r.mse),
                r.samples.len().to_string(),
                samples.join(" "),
                fmt_opt(r.t_final),
                fmt_opt(g.and_then(|g| g.re)),
                fmt_opt(g.and_then(|g| g.dcs)),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.summary())
            .map_err(|e| invalid(format!("json: {e}")))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_timings_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.timings)
            .map_err(|e| invalid(format!("json: {e}")))?;
        writeln!(w)?;
        Ok(())
    }
}

/// Random stream for one trial of a run.
pub fn trial_rng(master: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng
}

/// Random row split: the first `ceil(frac S)` shuffled rows train, the
/// rest test, with at least two training rows and one test row.
pub fn split_rows<R: Rng>(s: usize, frac: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if s < 3 {
        return Err(invalid(format!("need at least 3 signals to split, got {s}")));
    }
    let mut rows: Vec<usize> = (0..s).collect();
    rows.shuffle(rng);
    let n_train = ((frac * s as f64).ceil() as usize).clamp(2, s - 1);
    let test = rows.split_off(n_train);
    Ok((rows, test))
}

struct TrialOutput {
    rows: Vec<ResultRow>,
    graph: TrialGraphStats,
    times: StageTimes,
}

/// The learned model of one trial.
struct Learned {
    graph: SignedGraph,
    l: SparseSymMatrix,
    balanced: SignedGraph,
    l_b: SparseSymMatrix,
}

fn learn_trial(cfg: &ExperimentConfig, train: &SignalMatrix, times: &mut StageTimes) -> Result<Learned> {
    let t0 = Instant::now();
    let c = regularized_covariance(train)?;
    times.covariance = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let est = glasso(
        &c,
        &GlassoOptions {
            phi: cfg.phi,
            tol: cfg.glasso_tol,
            max_iter: cfg.glasso_max_iter,
            penalize_diagonal: false,
        },
    )?;
    let graph = precision_to_graph(&est.p, DEFAULT_PRUNE)?;
    let l = generalized_laplacian(&graph);
    times.glasso = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let out = balance_components(&graph, &BalanceOptions::default())?;
    let l_b = generalized_laplacian(&out.graph);
    times.balance = t0.elapsed().as_secs_f64();
    Ok(Learned {
        graph,
        l,
        balanced: out.graph,
        l_b,
    })
}

fn run_trial(cfg: &ExperimentConfig, data: &Dataset, trial: usize) -> TrialOutput {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut times = StageTimes {
        trial,
        ..StageTimes::default()
    };
    let mut graph = TrialGraphStats {
        trial,
        re: None,
        dcs: None,
        edges_learned: 0,
        edges_balanced: 0,
        error: None,
    };
    let fail_all = |msg: String, graph: TrialGraphStats, times: StageTimes| {
        let mut rows = Vec::new();
        for &sampler in &cfg.samplers {
            for &budget in &cfg.budgets {
                for &noise in &cfg.noise {
                    rows.push(ResultRow {
                        sampler,
                        budget,
                        noise,
                        trial,
                        mse: None,
                        samples: Vec::new(),
                        t_final: None,
                        error: Some(msg.clone()),
                    });
                }
            }
        }
        TrialOutput {
            rows,
            graph: TrialGraphStats {
                error: Some(msg),
                ..graph
            },
            times,
        }
    };

    let split = split_rows(data.signals.n_signals(), cfg.split_fraction, &mut rng);
    let (train_idx, test_idx) = match split {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string(), graph, times),
    };
    let prepared = (|| -> Result<(SignalMatrix, SignalMatrix, Vec<SignalMatrix>)> {
        let train = data.signals.select_rows(&train_idx)?;
        let test = data.signals.select_rows(&test_idx)?;
        let alphabet = Alphabet::from_signals(&train);
        let noisy = cfg
            .noise
            .iter()
            .map(|&m| add_noise_with(&test, m, &alphabet, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok((train, test, noisy))
    })();
    let (train, test, noisy) = match prepared {
        Ok(p) => p,
        Err(e) => return fail_all(e.to_string(), graph, times),
    };
    let learned = match learn_trial(cfg, &train, &mut times) {
        Ok(l) => l,
        Err(e) => return fail_all(e.to_string(), graph, times),
    };
    graph.edges_learned = learned.graph.edge_count();
    graph.edges_balanced = learned.balanced.edge_count();
    graph.re = relative_error(&learned.l, &learned.l_b).ok();
    graph.dcs = deltacon(&learned.graph, &learned.balanced, DELTACON_EPS).ok();

    let t0 = Instant::now();
    let aligned = gdpa_align_components(&learned.l_b);
    times.align = t0.elapsed().as_secs_f64();

    let l_rec = match cfg.reconstruct_with {
        ReconstructWith::Learned => &learned.l,
        ReconstructWith::Balanced => &learned.l_b,
    };
    let n = data.signals.n_nodes();
    let mut rows = Vec::new();
    for &sampler in &cfg.samplers {
        for &budget in &cfg.budgets {
            let t0 = Instant::now();
            let picked: Result<(Vec<usize>, Option<f64>)> = match sampler {
                Sampler::Proposed => match &aligned {
                    Ok(op) => gdas_sample(op, cfg.mu, budget).map(|s| (s.nodes, Some(s.t_final))),
                    Err(e) => Err(invalid(format!("alignment failed: {e}"))),
                },
                Sampler::Random => baseline_random(n, budget, &mut rng).map(|v| (v, None)),
                Sampler::DegreeGreedy => {
                    baseline_degree_greedy(&learned.graph, budget).map(|v| (v, None))
                }
            };
            times.sample += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            for (k, &noise) in cfg.noise.iter().enumerate() {
                let mut row = ResultRow {
                    sampler,
                    budget,
                    noise,
                    trial,
                    mse: None,
                    samples: Vec::new(),
                    t_final: None,
                    error: None,
                };
                match &picked {
                    Ok((nodes, t_final)) => {
                        row.samples = nodes.clone();
                        row.t_final = *t_final;
                        match mean_test_mse(l_rec, nodes, &test, &noisy[k], cfg) {
                            Ok(v) => row.mse = Some(v),
                            Err(e) => row.error = Some(e.to_string()),
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                rows.push(row);
            }
            times.reconstruct += t0.elapsed().as_secs_f64();
        }
    }
    TrialOutput { rows, graph, times }
}

fn mean_test_mse(
    l: &SparseSymMatrix,
    nodes: &[usize],
    clean: &SignalMatrix,
    noisy: &SignalMatrix,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for s in 0..clean.n_signals() {
        let y: Vec<f64> = nodes.iter().map(|&i| noisy.data()[(s, i)]).collect();
        let p = ReconstructionProblem {
            l,
            nodes,
            y: &y,
            mu: cfg.mu,
        };
        let x = reconstruct(&p, cfg.tol)?;
        total += mse(&clean.signal(s), &x)?;
    }
    Ok(total / clean.n_signals() as f64)
}

/// Runs every trial of `cfg` on `data`. Stage failures are recorded in the
/// affected rows; only an invalid config is an error.
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    let n = data.signals.n_nodes();
    if let Some(&b) = cfg.budgets.iter().find(|&&b| b > n) {
        return Err(invalid(format!("budget {b} exceeds {n} nodes")));
    }
    let outputs: Vec<TrialOutput> = (0..cfg.trials).map(|t| run_trial(cfg, data, t)).collect();

    let mut rows = Vec::new();
    let mut graphs = Vec::new();
    let mut timings = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        graphs.push(out.graph);
        timings.push(out.times);
    }
    let sampler_rank = |s: Sampler| cfg.samplers.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    let budget_rank = |b: usize| cfg.budgets.iter().position(|&x| x == b).unwrap_or(usize::MAX);
    let noise_rank = |m: NoiseModel| cfg.noise.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| {
        (
            sampler_rank(r.sampler),
            budget_rank(r.budget),
            noise_rank(r.noise),
            r.trial,
        )
    });
    Ok(ExperimentResult {
        n,
        signals: data.signals.n_signals(),
        trials: cfg.trials,
        rows,
        graphs,
        timings,
    })
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    run_on_dataset(cfg, &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::empirical_covariance;

    fn params(n: usize, neg: f64) -> GraphParams {
        GraphParams {
            n,
            avg_degree: 4.0,
            weight_range: [0.1, 2.0],
            neg_fraction: neg,
        }
    }

    #[test]
    fn generated_graphs_are_balanced_and_connected() {
        for seed in 0..20 {
            let g = generate_balanced_graph(&params(25, 0.4), seed).unwrap();
            assert!(g.is_connected());
            assert!(is_balanced(&g).is_some());
            assert_eq!(g.edge_count(), 50);
            assert!(g.edges().iter().all(|e| (0.1..=2.0).contains(&e.w.abs())));
        }
        let pos = generate_balanced_graph(&params(25, 0.0), 3).unwrap();
        assert!(!pos.has_negative_edges());
        let small = GraphParams {
            avg_degree: 2.0,
            ..params(4, 0.5)
        };
        assert!(generate_balanced_graph(&small, 1).is_ok());
        assert!(generate_balanced_graph(&params(4, 0.5), 1).is_err());
        let bad = GraphParams {
            weight_range: [0.0, 1.0],
            ..params(10, 0.5)
        };
        assert!(generate_balanced_graph(&bad, 1).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_balanced_graph(&params(40, 0.3), 17).unwrap();
        let b = generate_balanced_graph(&params(40, 0.3), 17).unwrap();
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        a.write_edge_list(&mut ta).unwrap();
        b.write_edge_list(&mut tb).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn perturbation_unbalances() {
        let g = generate_balanced_graph(&params(30, 0.5), 5).unwrap();
        let p = perturb_to_unbalanced(&g, 3, 6).unwrap();
        assert!(is_balanced(&p).is_none());
        let flipped = g
            .edges()
            .iter()
            .zip(p.edges())
            .filter(|(a, b)| a.w == -b.w)
            .count();
        assert_eq!(flipped, 3);
        assert_eq!(perturb_to_unbalanced(&g, 0, 6).unwrap(), g);
        let tree = SignedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(perturb_to_unbalanced(&tree, 1, 0).is_err());
    }

    #[test]
    fn gmrf_variances() {
        let x = gmrf_sample(&SparseSymMatrix::identity(2), 0.0, 10_000, 1).unwrap();
        let c = empirical_covariance(&x, 0.0).unwrap();
        assert!((c.get(0, 0) - 1.0).abs() < 0.05);
        let d = gmrf_sample(&SparseSymMatrix::from_diagonal(&[1.0, 4.0]), 0.0, 10_000, 2).unwrap();
        let c = empirical_covariance(&d, 0.0).unwrap();
        assert!((c.get(0, 0) - 1.0).abs() < 0.05);
        assert!((c.get(1, 1) - 0.25).abs() < 0.0125);
        let indefinite = SparseSymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(gmrf_sample(&indefinite, 0.5, 3, 0).is_err());
        assert!(gmrf_sample(&indefinite, 1.5, 3, 0).is_ok());
    }

    #[test]
    fn noise_models() {
        let x = SignalMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(add_noise(&x, NoiseModel::None, 0).unwrap(), x);
        assert_eq!(add_noise(&x, NoiseModel::Flip(0.0), 0).unwrap(), x);
        let flipped = add_noise(&x, NoiseModel::Flip(1.0), 0).unwrap();
        assert_eq!(flipped.data(), &(-x.data()));
        let g = add_noise(&x, NoiseModel::Gauss(0.5), 0).unwrap();
        assert_ne!(g, x);

        assert_eq!("none".parse::<NoiseModel>().unwrap(), NoiseModel::None);
        assert_eq!("flip:0.1".parse::<NoiseModel>().unwrap(), NoiseModel::Flip(0.1));
        assert_eq!("gauss:2".parse::<NoiseModel>().unwrap(), NoiseModel::Gauss(2.0));
        assert!("flip:1.5".parse::<NoiseModel>().is_err());
        assert!("gauss:-1".parse::<NoiseModel>().is_err());
        assert!("pink".parse::<NoiseModel>().is_err());
        for m in [NoiseModel::None, NoiseModel::Flip(0.05), NoiseModel::Gauss(1.5)] {
            assert_eq!(m.to_string().parse::<NoiseModel>().unwrap(), m);
        }
    }

    #[test]
    fn flip_rate_matches_probability() {
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|s| (0..100).map(|c| if (s + c) % 2 == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        let x = SignalMatrix::from_rows(&rows).unwrap();
        let y = add_noise(&x, NoiseModel::Flip(0.1), 77).unwrap();
        let changed = x.data().iter().zip(y.data().iter()).filter(|(a, b)| a != b).count();
        let rate = changed as f64 / 1e5;
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn csv_examples() {
        let x = read_csv("1,-1\n-1,1\n".as_bytes(), false).unwrap();
        assert_eq!((x.n_signals(), x.n_nodes()), (2, 2));
        let h = read_csv("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(h.labels().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(h.signal(1), vec![3.0, 4.0]);

        let err = read_csv("1,2\n3\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = read_csv("1,2\n3,x\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");

        let mut buf = Vec::new();
        write_csv(&h, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice(), true).unwrap(), h);
    }

    #[test]
    fn baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = baseline_random(10, 4, &mut rng).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(baseline_random(3, 4, &mut rng).is_err());

        let g = SignedGraph::from_edges(4, [(0, 1, 1.0), (1, 2, -2.0), (2, 3, 1.0)]).unwrap();
        // |degrees|: 1, 3, 3, 1
        assert_eq!(baseline_degree_greedy(&g, 3).unwrap(), vec![1, 2, 0]);
        assert!(baseline_degree_greedy(&g, 5).is_err());
    }

    #[test]
    fn split_sizes() {
        let mut rng = trial_rng(3, 0);
        let (train, test) = split_rows(20, 0.9, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (18, 2));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(split_rows(2, 0.5, &mut rng).is_err());
    }

    fn smoke_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            Source::Synthetic(SyntheticSource {
                n: 15,
                avg_degree: 4.0,
                weight_range: [0.5, 1.5],
                neg_fraction: 0.3,
                flip_count: 2,
                signals: 60,
                eig_floor: 0.2,
                seed: None,
            }),
            vec![3],
        );
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn smoke_run_fills_every_cell() {
        let cfg = smoke_config();
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 3);
        for r in &res.rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            assert!(r.mse.unwrap().is_finite());
            assert_eq!(r.samples.len(), 3);
        }
        assert!(res.rows[0].t_final.is_some());
        assert!(res.graphs[0].re.unwrap().is_finite());
        assert!(res.graphs[0].dcs.unwrap() > 0.0);
    }

    #[test]
    fn fixed_seed_gives_identical_csv() {
        let mut cfg = smoke_config();
        cfg.trials = 2;
        cfg.noise = vec![NoiseModel::None, NoiseModel::Gauss(0.5)];
        let render = || {
            let res = run_experiment(&cfg).unwrap();
            let mut csv = Vec::new();
            res.write_csv(&mut csv).unwrap();
            let mut json = Vec::new();
            res.write_summary_json(&mut json).unwrap();
            (csv, json)
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn config_from_toml() {
        let text = r#"
seed = 4
trials = 2
budgets = [3, 5]
noise = ["none", "flip:0.1"]
samplers = ["proposed", "random"]

[source]
kind = "synthetic"
n = 12
avg_degree = 3.0
weight_range = [0.1, 2.0]
neg_fraction = 0.25
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.noise, vec![NoiseModel::None, NoiseModel::Flip(0.1)]);
        assert_eq!(cfg.samplers, vec![Sampler::Proposed, Sampler::Random]);
        assert_eq!(cfg.mu, 0.01);
        assert!(ExperimentConfig::from_toml(&text.replace("budgets = [3, 5]", "budgets = [13]")).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("trials = 2", "trials = 0")).is_err());
        assert!(ExperimentConfig::from_toml("budgets = [1]\n[source]\nkind = \"csv\"\npath = \"x.csv\"\n").is_ok());
    }
}
