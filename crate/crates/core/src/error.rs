use thiserror::Error;

/// Errors raised by the simulation and inference layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("unsupported number of sites: {0} (1..=12)")]
    TooManySites(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown species `{0}`")]
    UnknownSpecies(String),

    #[error("unknown nucleus `{0}`")]
    UnknownNucleus(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid molecule: {0}")]
    InvalidMolecule(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear-response guard violated: {0}")]
    RegimeGuard(String),

    #[error("sampler did not converge: {0}")]
    NonConvergence(String),

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error("empty noise band")]
    EmptyNoiseBand,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
