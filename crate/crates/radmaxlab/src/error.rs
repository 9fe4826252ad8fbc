use thiserror::Error;

/// Errors surfaced by the laboratory. The solver variants are meaningful
/// experimental output, not just plumbing failures: a resolvent that cannot
/// be inverted at some (p, B) is recorded per-case by the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("solver failure: {context} (residual {residual:.3e})")]
    SolverFailure { context: String, residual: f64 },

    #[error("resolvent failure: {0}")]
    ResolventFailure(String),

    #[error("divergent series: {0}")]
    Divergence(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
