use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector must be non-empty with finite entries")]
    InvalidVector,

    #[error("channel set is rank deficient (channel {index} lies in the span of the others)")]
    DegenerateChannel { index: usize },

    #[error("eigenvector iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    // -- scheduling parameters --
    #[error("t = K*M/N must be an integer (K={k}, M={m}, N={n})")]
    NonIntegerCacheRatio { k: usize, m: usize, n: usize },

    #[error("cache size M={m} exceeds library size N={n}")]
    CacheExceedsLibrary { m: usize, n: usize },

    #[error("alpha={alpha} outside 1..={max} (min(L, K-t))")]
    AlphaOutOfRange { alpha: usize, max: usize },

    #[error("beta={beta} outside 1..={alpha}")]
    BetaOutOfRange { beta: usize, alpha: usize },

    #[error("t+beta={group} does not divide t+alpha={subset}")]
    GroupSizeMismatch { subset: usize, group: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    // -- content --
    #[error("file length {bits} bits is not divisible by {parts} mini-files")]
    IndivisibleFile { bits: usize, parts: usize },

    #[error("mini-files of file {file}, subfile {tau:?} for user {user} exhausted (gamma={gamma})")]
    FreshExhausted {
        user: usize,
        file: usize,
        tau: Vec<usize>,
        gamma: usize,
    },

    // -- beamforming --
    #[error("no interference-free direction exists for stream {stream:?}")]
    EmptyNullSpace { stream: Vec<usize> },

    #[error("beamformer design produced no feasible point")]
    InfeasibleDesign,

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by invalid user-supplied parameters.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonIntegerCacheRatio { .. }
                | Error::CacheExceedsLibrary { .. }
                | Error::AlphaOutOfRange { .. }
                | Error::BetaOutOfRange { .. }
                | Error::GroupSizeMismatch { .. }
                | Error::Parameter(_)
                | Error::IndivisibleFile { .. }
        )
    }

    /// True for failures inside the numerical optimizers.
    pub fn is_solver(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleDesign | Error::Solver(_) | Error::NoConvergence { .. }
        )
    }
}
