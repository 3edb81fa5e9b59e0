//! `signgraph` command-line interface.
//!
//! Exit codes: 0 on success, 2 for bad input, 3 for numerical failure.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signgraph::balance::{balance_components, BalanceOptions, PivotPolicy};
use signgraph::gdpa_gdas::{gdas_sample, gdpa_align_components, SampleSet};
use signgraph::harness::{ingest_csv, run_experiment, ExperimentConfig, NoiseModel, Source};
use signgraph::learn::{glasso, regularized_covariance, GlassoOptions};
use signgraph::reconstruct::{reconstruct, ReconstructionProblem};
use signgraph::{Error, SignedGraph, SparseSymMatrix};

#[derive(Parser)]
#[command(name = "signgraph", version, about = "Sampling on signed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a sparse precision matrix from signals (CSV, one signal per row).
    Learn(LearnArgs),
    /// Balance a signed graph given as an edge list.
    Balance(BalanceArgs),
    /// Select samples on a balanced generalized Laplacian.
    Sample(SampleArgs),
    /// Reconstruct a signal from sampled values.
    Reconstruct(ReconstructArgs),
    /// Run an experiment described by a TOML config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// Signal CSV.
    input: PathBuf,
    /// First CSV row holds node labels.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 0.1)]
    phi: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Matrix Market output; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BalanceArgs {
    /// Edge list.
    input: PathBuf,
    /// Seed node.
    #[arg(long, default_value_t = 0)]
    seed: usize,
    /// Case-2 pivots drawn from this stream instead of the smallest index.
    #[arg(long)]
    pivot_seed: Option<u64>,
    /// Balanced edge list; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON report of removed and augmented edges.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Laplacian in Matrix Market format.
    laplacian: PathBuf,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Laplacian in Matrix Market format.
    laplacian: PathBuf,
    /// Sample set written by `sample`.
    #[arg(long)]
    samples: PathBuf,
    /// Observed values, one per line in sample order.
    #[arg(long)]
    values: PathBuf,
    /// Defaults to the sample set's mu.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Result CSV; the JSON summary goes next to it with a `.json`
    /// extension. Stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Per-trial wall-times (JSON).
    #[arg(long)]
    timings: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Replaces the config's budgets.
    #[arg(long)]
    budget: Option<usize>,
    /// Replaces the config's noise list: none, flip:p or gauss:sigma.
    #[arg(long)]
    noise: Option<NoiseModel>,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Io(io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

type CliResult = Result<(), CliError>;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Runs `f` on a buffered writer for `path`, or stdout.
fn with_output<F>(path: Option<&Path>, f: F) -> CliResult
where
    F: FnOnce(&mut dyn Write) -> signgraph::Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn read_matrix(path: &Path) -> Result<SparseSymMatrix, CliError> {
    Ok(SparseSymMatrix::read_matrix_market(open(path)?)?)
}

fn learn(a: LearnArgs) -> CliResult {
    let x = ingest_csv(&a.input, a.header)?;
    let c = regularized_covariance(&x)?;
    let est = glasso(
        &c,
        &GlassoOptions {
            phi: a.phi,
            tol: a.tol,
            max_iter: a.max_iter,
            penalize_diagonal: false,
        },
    )?;
    if !est.converged {
        eprintln!(
            "warning: graphical lasso stopped after {} sweeps (change {:.3e})",
            est.iterations, est.delta
        );
    }
    with_output(a.output.as_deref(), |w| est.p.write_matrix_market(w))
}

fn balance(a: BalanceArgs) -> CliResult {
    let g = SignedGraph::read_edge_list(open(&a.input)?)?;
    let opts = BalanceOptions {
        seed: a.seed,
        pivot: a.pivot_seed.map_or(PivotPolicy::SmallestIndex, PivotPolicy::Seeded),
        record_steps: false,
    };
    let out = balance_components(&g, &opts)?;
    with_output(a.output.as_deref(), |w| out.graph.write_edge_list(w))?;
    if let Some(path) = &a.report {
        let report = serde_json::json!({
            "coloring": out.coloring,
            "report": out.report,
        });
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn sample(a: SampleArgs) -> CliResult {
    let l = read_matrix(&a.laplacian)?;
    let op = gdpa_align_components(&l)?;
    let set = gdas_sample(&op, a.mu, a.budget)?;
    with_output(a.output.as_deref(), |w| set.write_text(w))
}

fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v = t.parse::<f64>().map_err(|e| Error::Parse {
            line: k + 1,
            message: format!("bad value {t:?}: {e}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn reconstruct_cmd(a: ReconstructArgs) -> CliResult {
    let l = read_matrix(&a.laplacian)?;
    let set = SampleSet::read_text(open(&a.samples)?)?;
    let y = read_values(&a.values)?;
    let p = ReconstructionProblem {
        l: &l,
        nodes: &set.nodes,
        y: &y,
        mu: a.mu.unwrap_or(set.mu),
    };
    let x = reconstruct(&p, a.tol)?;
    with_output(a.output.as_deref(), |w| {
        for v in &x {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    })
}

fn bench(a: BenchArgs) -> CliResult {
    let text = std::fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Source::Csv { path, .. } = &mut cfg.source {
        if path.is_relative() {
            if let Some(dir) = a.config.parent() {
                *path = dir.join(&*path);
            }
        }
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(p) = a.phi {
        cfg.phi = p;
    }
    if let Some(m) = a.mu {
        cfg.mu = m;
    }
    if let Some(b) = a.budget {
        cfg.budgets = vec![b];
    }
    if let Some(n) = a.noise {
        cfg.noise = vec![n];
    }
    let res = run_experiment(&cfg)?;
    with_output(a.output.as_deref(), |w| res.write_csv(w))?;
    match &a.output {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p.with_extension("json"))?);
            res.write_summary_json(&mut w)?;
            w.flush()?;
        }
        None => res.write_summary_json(io::stdout().lock())?,
    }
    if let Some(p) = &a.timings {
        let mut w = BufWriter::new(File::create(p)?);
        res.write_timings_json(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Learn(a) => learn(a),
        Command::Balance(a) => balance(a),
        Command::Sample(a) => sample(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
