use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },

    #[error("invalid dimensions {dims:?}: {reason}")]
    InvalidDims { dims: (usize, usize, usize), reason: String },

    #[error("index {index:?} out of bounds for dims {dims:?}")]
    IndexOutOfBounds {
        index: (usize, usize, usize),
        dims: (usize, usize, usize),
    },

    #[error("invalid unfolding mode {0} (expected 1, 2 or 3)")]
    InvalidMode(usize),

    #[error("column count mismatch: {left} vs {right}")]
    ColumnMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {rank} exceeds the bound min(TN, TS, NS) = {bound}")]
    RankTooLarge { rank: usize, bound: usize },

    #[error("mask leaves {mode} index {index} without observations")]
    MaskDegenerate { mode: &'static str, index: usize },

    #[error("objective or gradient is not finite")]
    NonFiniteObjective,

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("{path}: row {row}: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("cannot aggregate {native}-minute data to {target} minutes")]
    IncompatibleResolution { native: u32, target: u32 },

    #[error("missing series for fan '{fan}' on {day}")]
    MissingSeries { fan: String, day: String },

    #[error("window {label} [{start}, {end}] out of range for {slots} slots")]
    WindowOutOfRange {
        label: String,
        start: usize,
        end: usize,
        slots: usize,
    },

    #[error("overlapping event windows: {0}")]
    OverlappingWindows(String),

    #[error("insufficient context around window: {0}")]
    InsufficientContext(String),

    #[error("insufficient history: need {needed} prior baseline days, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("mean of actual values is zero")]
    ZeroMeanActual,

    #[error("need at least {needed} slots, got {actual}")]
    TooFewSlots { needed: usize, actual: usize },

    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Numerical failures as opposed to input or configuration problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteObjective)
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
