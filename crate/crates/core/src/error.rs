use std::fmt;

use thiserror::Error;

/// One violated modelling assumption found during validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RankDeficient { smallest: f64, largest: f64 },
    BadRiskAversion(f64),
    BadDimension(String),
    NonPositive { name: &'static str, value: f64 },
    NotSymmetric(&'static str),
    NotPositiveDefinite(&'static str),
    NotPositiveSemidefinite(&'static str),
    NonFinite(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RankDeficient { smallest, largest } => write!(
                f,
                "sigma is rank deficient (smallest singular value {smallest:e}, largest {largest:e})"
            ),
            Violation::BadRiskAversion(g) => write!(f, "risk aversion gamma = {g} must be < 1"),
            Violation::BadDimension(msg) => write!(f, "bad dimension: {msg}"),
            Violation::NonPositive { name, value } => write!(f, "{name} = {value} must be > 0"),
            Violation::NotSymmetric(name) => write!(f, "{name} must be symmetric"),
            Violation::NotPositiveDefinite(name) => write!(f, "{name} must be positive definite"),
            Violation::NotPositiveSemidefinite(name) => {
                write!(f, "{name} must be positive semidefinite")
            }
            Violation::NonFinite(name) => write!(f, "{name} contains non-finite entries"),
        }
    }
}

/// Every violated assumption of a parameter block, in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError(pub Vec<Violation>);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for ValidationError {}

impl ValidationError {
    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Validation(#[from] ValidationError),

    #[error("factorization failed: {0}")]
    FactorizationFailed(String),

    #[error("paths are defined on incompatible grids: {0}")]
    GridMismatch(String),

    #[error("wealth must be positive, got {0}")]
    NonPositiveWealth(f64),

    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),

    #[error(
        "no sign change of the boundary residual on [{lo:e}, {hi:e}] (g = {g_lo:e}, {g_hi:e})"
    )]
    NoBracket {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("strategy has zero risk under the ellipsoid shape")]
    ZeroStrategy,

    #[error("saddle inequality violated by {violation:e} at pi = {pi:?}, mu = {mu:?}")]
    SaddleViolation {
        violation: f64,
        pi: Vec<f64>,
        mu: Vec<f64>,
    },

    #[error("operation requires d = 2, got d = {0}")]
    UnsupportedDimension(usize),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error(
        "conditional covariance is degenerate (smallest eigenvalue {smallest:e}, trace {trace:e})"
    )]
    DegenerateCovariance { smallest: f64, trace: f64 },

    #[error("explicit step of size {0:e} destroyed positive semidefiniteness; use a smaller dt")]
    StepTooLarge(f64),

    #[error("expert update matrix is singular")]
    SingularUpdate,

    #[error("unsupported evaluation mode: {0}")]
    ModeUnsupported(String),

    #[error("empty study: n_sims must be at least 1")]
    EmptyStudy,
}

pub type Result<T> = std::result::Result<T, Error>;
