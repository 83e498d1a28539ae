use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid radii out of order: inner {inner} must be below outer {outer}")]
    GridOrdering { inner: f64, outer: f64 },

    #[error("grid needs at least {min} intervals, got {got}")]
    GridTooSmall { got: usize, min: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("bubble scales not separated: delta[{index}] / delta[{prev}] = {ratio:.3} > {limit}")]
    ScalesNotSeparated {
        prev: usize,
        index: usize,
        ratio: f64,
        limit: f64,
    },

    #[error("found {found} concentration peaks, expected {expected}")]
    TooFewPeaks { found: usize, expected: usize },

    #[error("trajectory escaped at r = {radius:e}")]
    Escaped { radius: f64 },

    #[error("no nodal bracket for {zeros} interior zeros in slope range [{lo:e}, {hi:e}]; scan saw zero counts {seen:?}")]
    NoBracket {
        zeros: usize,
        lo: f64,
        hi: f64,
        seen: Vec<usize>,
    },

    #[error("newton stagnated; residual history {history:?}")]
    NewtonStagnation { history: Vec<f64> },

    #[error("solution has {found} interior sign changes, expected {expected}")]
    WrongNodalCount { found: usize, expected: usize },

    #[error("solver returned a trivial solution (weighted L2 norm {norm:e})")]
    TrivialSolution { norm: f64 },

    #[error("eigen iteration did not converge; ritz history {history:?}")]
    EigenNonConvergence { history: Vec<f64> },

    #[error("eigenvector is not single-signed ({negative} sign flips)")]
    NonPositiveEigenvector { negative: usize },

    #[error("limit eigenvalue {lambda} is not negative; mesh too coarse or radius too small")]
    NonNegativeLimit { lambda: f64 },

    #[error("first eigenvalue is zero within tolerance ({lambda:e})")]
    ZeroEigenvalue { lambda: f64 },

    #[error("scaling fit needs at least 3 hole radii, got {0}")]
    Underdetermined(usize),

    #[error("integrator failure at t = {t:e}: {reason}")]
    IntegratorFailure { t: f64, reason: String },
}
