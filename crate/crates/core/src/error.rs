use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("negative entry at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSumError { row: usize, sum: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("alphabet of size {size} exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("input index {index} out of range for {num_inputs} inputs")]
    IndexOutOfRange { index: usize, num_inputs: usize },
    #[error("input subset must be non-empty")]
    EmptySubset,
    #[error("input subset indices must be strictly increasing (got {0:?})")]
    UnsortedSubset(Vec<usize>),
    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("KKT condition violated at input {x} (slack {slack:e})")]
    KktViolation { x: usize, slack: f64 },
    #[error("eta {eta} is infeasible, must lie in (0, {max}]")]
    EtaInfeasible { eta: f64, max: f64 },
    #[error("no hull point covers the support of the target distribution")]
    SupportInfeasible,
    #[error("kappa must be positive, got {0}")]
    InvalidKappa(f64),
    #[error("invalid k = {k} for {num_inputs} inputs")]
    InvalidK { k: usize, num_inputs: usize },
    #[error("{count} subsets exceed the enumeration budget of {budget}")]
    BudgetExceeded { count: u128, budget: u128 },
    #[error("invalid Dirichlet parameter: {0}")]
    InvalidAlpha(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("submodularity counterexample failed (margin {margin:e})")]
    CounterexampleFailed { margin: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
