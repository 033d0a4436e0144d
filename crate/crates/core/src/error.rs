use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: m = {0} (need m >= 2)")]
    InvalidGrid(usize),

    #[error("unsupported chaos order {0} (supported: 1..=3)")]
    UnsupportedOrder(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shift is singular: -1 is (numerically) an eigenvalue of K, gap {gap:.3e}")]
    SingularShift { gap: f64 },

    #[error("operator is not unitary: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { residual: f64, tol: f64 },

    #[error("gamma sample {index} is not orthogonal: residual {residual:.3e}")]
    NonOrthogonal { index: usize, residual: f64 },

    #[error("no invariant witness: {0}")]
    NoWitness(String),

    #[error("probe set is rank deficient: rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
