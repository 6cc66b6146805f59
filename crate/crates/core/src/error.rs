use thiserror::Error;

/// Errors produced by the rotor-chain toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("charge truncation n_max must be at least 1, got {0}")]
    InvalidTruncation(usize),

    #[error("phase shift a = {shift} vanishes identically for n_max = {n_max} (need 1 <= a <= {})", 2 * .n_max)]
    ShiftOutOfRange { shift: usize, n_max: usize },

    #[error("local operators live on different truncations ({left} vs {right})")]
    BasisMismatch { left: usize, right: usize },

    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("periodic boundary conditions are only supported by the exact-diagonalization oracle")]
    PeriodicMpo,

    #[error("site {site} out of range for a chain of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("product operator sites must be strictly increasing (site {0} repeated or out of order)")]
    UnorderedSites(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty matrix passed to a decomposition")]
    EmptyMatrix,

    #[error("linear algebra backend failed: {0}")]
    Backend(String),

    #[error("Hilbert space dimension {dim} exceeds the exact-diagonalization guard {guard}")]
    DimensionGuard { dim: usize, guard: usize },

    #[error("parity sector targeting requires [H, P] = 0, but {0}")]
    SymmetryBroken(&'static str),

    #[error("state landed in the wrong parity sector: requested {requested:+}, measured <P> = {measured:.6}")]
    SectorMismatch { requested: i8, measured: f64 },

    #[error("no correlation plateau found: {0}")]
    NoPlateau(String),

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("value outside the domain of {what}: {reason}")]
    Domain { what: &'static str, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
