use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A requested occupation exceeds the configured grid capacity.
    #[error("capacity exceeded: {what} = {value} > {limit}")]
    Capacity {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Not enough data to perform the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Distributions that must share a particle number do not.
    #[error("particle number mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
    /// Normal equations or a covariance matrix are singular.
    #[error("singular system in {0}")]
    Singular(&'static str),
    /// An iterative method failed to converge; carries the best point found.
    #[error("{context} did not converge (best objective {best_value:e})")]
    NotConverged {
        context: &'static str,
        best: Vec<f64>,
        best_value: f64,
    },
    /// A fit produced a non-physical result.
    #[error("non-physical fit result: {0}")]
    NonPhysical(String),
    /// A drift-correction window has no resolvable zero-atom peak.
    #[error("no resolvable zero-atom peak in drift window {window}")]
    UnresolvedWindow { window: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
