use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("infeasible point: {0}")]
    InfeasiblePoint(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("unknown atom {index} (support has {len} atoms)")]
    UnknownAtom { index: usize, len: usize },
    #[error("empty support")]
    EmptySupport,
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("duality gap {0:e} is negative beyond tolerance; best-response subsolver failed")]
    NegativeGap(f64),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("missing records for (n, rep): {0:?}")]
    MissingRecords(Vec<(usize, usize)>),
    #[error("rate fit: {0}")]
    RateFit(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
