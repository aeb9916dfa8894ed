use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a required inequality. The message names it.
    #[error("parameter out of range: {0}")]
    Param(String),

    #[error("regularization must be positive here (epsilon = {0})")]
    NonPositiveEpsilon(f64),

    #[error("grid too small: need at least 3 nodes per axis, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("field shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("triple (p, gamma, s) = ({p}, {gamma}, {s}) is not admissible")]
    Inadmissible { p: f64, gamma: f64, s: f64 },

    #[error("wrong branch for beta = {beta}: {reason}")]
    Branch { beta: f64, reason: String },

    #[error("cylinder error: {0}")]
    Cylinder(String),

    #[error("solver produced a non-finite value at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("weight selection inconclusive: {0}")]
    WeightSelection(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
