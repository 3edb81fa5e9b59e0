use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix of order {n} exceeds the dense limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "conjugate gradient reached {iterations} iterations with relative residual \
         {residual:.3e} (condition estimate {condition:.3e})"
    )]
    IterationCap {
        iterations: usize,
        residual: f64,
        condition: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("first eigenvector entry {index} is numerically zero ({value:.3e}); graph is numerically reducible")]
    Reducible { index: usize, value: f64 },

    #[error("edge ({i}, {j}) is not present")]
    MissingEdge { i: usize, j: usize },

    #[error("coloring is not a balance certificate: edge ({i}, {j}) is inconsistent")]
    InvalidColoring { i: usize, j: usize },
}

impl Error {
    /// Solver and conditioning failures, as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::IterationCap { .. }
                | Error::NotPositiveDefinite(_)
                | Error::Singular(_)
                | Error::Reducible { .. }
        )
    }
}
