use thiserror::Error;

/// Errors produced by the rate, oracle, solver and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The constraint set is empty.
    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    /// A query falls outside the stored FKPP grid.
    #[error("out of grid: {0}")]
    OutOfGrid(String),

    #[error("FKPP solver unstable at step {step} (t = {time}): {detail}")]
    Instability { step: usize, time: f64, detail: String },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("population cap {cap} exceeded")]
    PopulationCap { cap: usize },

    #[error("only {hits} hits, need at least {needed}; increase replicas or alpha")]
    TooFewHits { hits: usize, needed: usize },

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
