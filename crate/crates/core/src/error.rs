use thiserror::Error;

use crate::komlos::EscapeCertificate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("random variables live on different probability spaces")]
    SpaceMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("negative input {0} where a nonnegative value is required")]
    NegativeInput(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("syntax error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("convexity spot-check failed: {0}")]
    ConvexityViolation(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    /// A finite subfamily whose intersection was shown to be empty.
    #[error("empty intersection of subfamily {indices:?} (separation {separation:e})")]
    EmptyIntersection { indices: Vec<usize>, separation: f64 },

    #[error("no convergence: {0}")]
    NonConvergent(String),

    #[error("sequence is not bounded in probability (eps = {})", .0.eps)]
    Unbounded(Box<EscapeCertificate>),

    #[error("KKM property violated at point {witness:?}")]
    KkmViolation { witness: Vec<f64> },

    #[error("hypothesis violated: {message}")]
    Hypothesis { message: String, witness: Vec<f64> },

    #[error("resource limit exceeded: {0}")]
    ResourceExhausted(String),

    #[error("iteration budget exhausted (best gap {best_gap:e})")]
    BudgetExhausted { best_gap: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Machine-readable error kind used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::SpaceMismatch => "space_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NegativeInput(_) => "negative_input",
            Error::Domain(_) => "domain",
            Error::Parse { .. } => "parse",
            Error::ConvexityViolation(_) => "convexity_violation",
            Error::EmptySet(_) => "empty_set",
            Error::EmptyIntersection { .. } => "empty_intersection",
            Error::NonConvergent(_) => "non_convergent",
            Error::Unbounded(_) => "unbounded",
            Error::KkmViolation { .. } => "kkm_violation",
            Error::Hypothesis { .. } => "hypothesis_violation",
            Error::ResourceExhausted(_) => "resource_exhausted",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True when the error is a mathematical outcome reported by a solver
    /// rather than a defect in the caller's input.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::ConvexityViolation(_)
                | Error::EmptySet(_)
                | Error::EmptyIntersection { .. }
                | Error::NonConvergent(_)
                | Error::Unbounded(_)
                | Error::KkmViolation { .. }
                | Error::Hypothesis { .. }
                | Error::ResourceExhausted(_)
                | Error::BudgetExhausted { .. }
        )
    }
}
