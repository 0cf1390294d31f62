use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pad factor {pad} is smaller than the number of factors {factors}")]
    PadTooSmall { pad: usize, factors: usize },

    #[error("dilated spectrum does not fit the grid (n = {n}, 2^t * max frequency = {needed})")]
    FrequencyOverflow { n: usize, needed: i64 },

    #[error("direct enumeration of {count} frequency tuples exceeds the budget of {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("symbol `{0}` is not poly-homogeneous")]
    NotPolyHomogeneous(String),

    #[error("symbol `{0}` is not alternating multilinear")]
    NotAlternating(String),

    #[error("unknown symbol id `{0}`")]
    UnknownSymbol(String),

    #[error("spectrum of input {slot} has energy outside the covered dyadic range")]
    UncoveredSpectrum { slot: usize },

    #[error("operator has no separable expansion configured")]
    MissingExpansion,

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
