use thiserror::Error;

/// Errors shared across the solver stack.
///
/// The variant names double as machine-readable error classes for the CLI
/// (`NonConvergence`, `PartVanished`, `NotPositiveDefinite`, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sampling failed at node ({x}, {y}) even after offset: {source}")]
    SamplingFailed {
        x: f64,
        y: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("operator is not positive definite")]
    NotPositiveDefinite,

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("zero field where a nonzero field is required")]
    ZeroField,

    #[error("field does not change sign: the {0} part vanished")]
    PartVanished(&'static str),

    #[error("eigenvalue cluster {0} not available (only {1} computed)")]
    ClusterMissing(usize, usize),

    #[error("eigenspace dimension {0} exceeds the supported sphere-search limit 3")]
    ClusterTooLarge(usize),

    #[error("transform {0} does not conform to the grid")]
    NonConformingTransform(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Short class name used for exit reporting and manifests.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "Syntax",
            Error::UnknownIdentifier { .. } => "UnknownIdentifier",
            Error::DomainError(_) => "DomainError",
            Error::DivisionByZero => "DivisionByZero",
            Error::DegenerateDomain(_) => "DegenerateDomain",
            Error::GridMismatch(_) => "GridMismatch",
            Error::SamplingFailed { .. } => "SamplingFailed",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::ZeroField => "ZeroField",
            Error::PartVanished(_) => "PartVanished",
            Error::ClusterMissing(..) => "ClusterMissing",
            Error::ClusterTooLarge(_) => "ClusterTooLarge",
            Error::NonConformingTransform(_) => "NonConformingTransform",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
