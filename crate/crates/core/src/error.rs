use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge: {context} (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure {
        context: String,
        estimate: f64,
        error: f64,
    },

    #[error("no truncation level up to 2^60 gives a small part with Kato norm below {eps:e}")]
    SplitFailure { eps: f64 },

    #[error("degenerate complex vector: {0}")]
    DegenerateZ(String),

    #[error("symbol vanishes on the lattice: |p(xi)| = {value:e} at xi = {xi:?}")]
    SymbolZero { xi: [f64; 3], value: f64 },

    #[error("no convergence after {iterations} iterations: {context}")]
    NoConvergence { iterations: usize, context: String },

    #[error("Neumann series not contractive: contraction estimate {estimate:.6}")]
    NotContractive { estimate: f64 },

    #[error("zero is (numerically) in the spectrum: |lambda_min| = {lambda_min:e}, |A| = {norm:e}")]
    SpectrumAtZero { lambda_min: f64, norm: f64 },

    #[error("linear solver diverged: {0}")]
    SolverDivergence(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("boundary trace not resolved: relative residual {residual:e} above {threshold:e}")]
    TraceResolution { residual: f64, threshold: f64 },

    #[error("reconstruction failed: {failed} of {total} modes could not be estimated")]
    ReconstructionFailed { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
