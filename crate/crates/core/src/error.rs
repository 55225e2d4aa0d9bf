use thiserror::Error;

use crate::domain::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("energy profile must be non-empty")]
    EmptyProfile,
    #[error("energy profile entry {index} is invalid ({value}); entries must be finite and >= 0")]
    InvalidEnergy { index: usize, value: f64 },
    #[error("energy profile has no positive entry")]
    ZeroProfile,
    #[error("alpha out of range: {0} (expected 0 <= alpha <= 1)")]
    AlphaOutOfRange(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("value must be finite and non-negative, got {0}")]
    NegativeOrNonFinite(f64),
    #[error("cumulative caps decrease at slot {slot}")]
    DecreasingCaps { slot: usize },
    #[error("invalid weights ({0}, {1}); both must be >= 0 and not both zero")]
    InvalidWeights(f64, f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("schedule is infeasible ({} violation(s), first at slot {})", .0.len(), .0.first().map_or(0, |v| v.slot))]
    Infeasible(Vec<Violation>),
    #[error("majorization requires equal totals, got {0} and {1}")]
    TotalMismatch(f64, f64),
    #[error("horizon {0} too large for brute force (max {1})")]
    HorizonTooLarge(usize, usize),
    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        best: Vec<f64>,
    },
    #[error("objective is not finite at a feasible point")]
    NonFiniteObjective,
    #[error("water tap relaxation did not settle after {0} sweeps")]
    TapRelaxation(usize),
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
