//! Sampling on signed graphs.
//!
//! The pipeline implemented here goes from raw signals to a reconstructed
//! signal in five stages:
//!
//! 1. [`learn`]: empirical covariance and graphical lasso give a sparse
//!    precision matrix, read as the generalized Laplacian of a signed graph
//!    with self-loops.
//! 2. [`balance`]: a greedy pass turns the (generally unbalanced) signed
//!    graph into a balanced one whose combinatorial Laplacian is dominated
//!    by the original in the PSD order.
//! 3. [`gdpa_gdas`]: the balanced Laplacian is similarity-transformed by its
//!    first eigenvector so that every Gershgorin disc left-end sits at
//!    `lambda_min`; disc shifting and scaling then pick samples that push the
//!    smallest left-end of `H^T H + mu L` above a threshold found by bisection.
//! 4. [`reconstruct`]: the MAP estimate solves `(H^T H + mu L) x = H^T y`.
//! 5. [`harness`]: synthetic data, noise models, baselines and the
//!    experiment runner.
//!
//! [`linalg`] and [`graph`] hold the shared matrix kernel and graph model.

pub mod balance;
pub mod error;
pub mod gdpa_gdas;
pub mod graph;
pub mod harness;
pub mod learn;
pub mod linalg;
pub mod reconstruct;

pub use error::{Error, Result};
pub use graph::{Coloring, Edge, SignedGraph};
pub use linalg::{CsrMatrix, DenseEigResult, SparseSymMatrix};
