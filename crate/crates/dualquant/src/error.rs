//! Crate-wide error type.
//!
//! All fallible operations return [`Result`]. The variants distinguish
//! caller mistakes (bad arguments, malformed config files) from geometric
//! conditions (a site outside the convex hull of a grid) and from genuine
//! numerical breakdown, which the CLI maps to distinct exit codes.

use thiserror::Error;

/// Errors produced by the library and the CLI harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent arguments (dimension mismatch, invalid
    /// distribution parameters, empty inputs, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The site lies outside the convex hull of the grid, so the
    /// barycentric constraint system is infeasible. Callers that need a
    /// total functional should use the extended error instead.
    #[error("site lies outside the convex hull of the grid")]
    OutsideHull,

    /// A one-dimensional site lies outside the knot range of an ordered
    /// grid.
    #[error("site {site} lies outside the knot range [{lo}, {hi}]")]
    OutsideRange { site: f64, lo: f64, hi: f64 },

    /// Simplex pivoting broke down even after anti-cycling retries. This
    /// indicates a severely ill-conditioned instance.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An exhaustive enumeration guard was exceeded.
    #[error("instance too large for exhaustive enumeration (limits: n <= {max_n}, d <= {max_d})")]
    TooLarge { max_n: usize, max_d: usize },

    /// A 1D grid was expected to span [0, 1] exactly.
    #[error("grid must span [0, 1] exactly, found [{lo}, {hi}]")]
    SpanMismatch { lo: f64, hi: f64 },

    /// The product decomposition of the local error only holds under the
    /// l_r norm with r = p.
    #[error("product decomposition requires the l_p norm with r = p (got r = {r}, p = {p})")]
    NormMismatch { r: f64, p: f64 },

    /// The optimizer was asked for fewer points than the problem admits:
    /// with a full-dimensional bounded support the hull of the grid can
    /// only cover the support when n >= d + 1.
    #[error("too few grid points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// The optimizer's running estimate grew an order of magnitude above
    /// its initial value.
    #[error("optimizer diverged: estimate grew from {initial:.6e} to {current:.6e}")]
    Diverged { initial: f64, current: f64 },

    /// A rate fit needs at least three rows with positive estimates.
    #[error("degenerate input: rate fit needs >= 3 rows with positive estimates, got {0}")]
    DegenerateInput(usize),

    /// The hypothesis r <= p of the coefficient bound was violated.
    #[error("hypothesis violation: the bound requires r <= p (got r = {r}, p = {p})")]
    HypothesisViolation { r: f64, p: f64 },

    /// A config file could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem error while reading or writing artifacts.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an I/O error together with the path it occurred on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
