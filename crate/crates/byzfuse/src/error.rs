//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! coarse on purpose: callers almost always either propagate the error or
//! print it, and the message carries the specifics.

/// Errors produced by the byzfuse library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented domain
    /// (probability out of range, empty grid, zero-length sequence, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Inputs are individually valid but mutually inconsistent
    /// (mismatched lengths, a threshold larger than the committee, ...).
    #[error("inconsistent input: {0}")]
    Mismatch(String),

    /// The requested computation is well defined but not provided by this
    /// implementation (e.g. analytic k-out-of-n performance for
    /// heterogeneous sensors).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The requested computation would exceed a hard resource guard,
    /// e.g. exhaustive sequence enumeration beyond the observation-window
    /// cap. The message names the scalable alternative.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A configuration file could not be parsed or fails validation.
    #[error("config error ({path}): {msg}")]
    Config { path: String, msg: String },

    /// A result record does not contain the series a plot request needs.
    #[error("missing series: {0}")]
    MissingSeries(String),

    /// Numerical failure inside a solver (LP did not terminate, consensus
    /// step outside the stability region, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used throughout the crate.
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }
}
