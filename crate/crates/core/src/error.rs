use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree sequence is not generating: {0}")]
    NotGenerating(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("instance too large for exhaustive enumeration: n = {n} (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid weight sequence: {0}")]
    InvalidWeights(String),

    #[error("invalid flow matrix: {0}")]
    InvalidFlow(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("operation requires a two-sheet hyperboloid feasibility class")]
    WrongClass,

    #[error("parameters do not certify a lower bound: {0}")]
    InfeasibleParams(String),

    #[error("both branches of the mu-adjustment program are infeasible")]
    BothInfeasible,

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("negative flow {flow} at line {line}")]
    NegativeFlow { line: usize, flow: f64 },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("asymmetric matrix file: entries ({i}, {j}) differ")]
    Symmetry { i: usize, j: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
