use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map is empty")]
    EmptyMap,

    #[error("row {row} has length {found}, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },

    #[error("map must contain exactly one goal cell, found {0}")]
    GoalCount(usize),

    #[error("map has no traversable cells")]
    NoOpenCells,

    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidGamma(f64),

    #[error("invalid noise specification: std={std}, clip={clip}")]
    InvalidNoise { std: f64, clip: f64 },

    #[error("invalid transition kernel at (state {state}, action {action}): {reason}")]
    InvalidKernel {
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("reward {value} at (state {state}, action {action}) exceeds r_max {r_max}")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
        r_max: f64,
    },

    #[error("index out of range: state {state} (n={n_states}), action {action} (n={n_actions})")]
    IndexOutOfRange {
        state: usize,
        action: usize,
        n_states: usize,
        n_actions: usize,
    },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("value iteration did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("compression budget {k} outside [1, {d}]")]
    BudgetOutOfRange { k: usize, d: usize },

    #[error("contraction factor is undefined for the zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("aggregation needs at least one agent")]
    EmptyAgentList,

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
