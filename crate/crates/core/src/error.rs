//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by constructors, order predicates and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ε-grid: {0}")]
    BadGrid(String),

    #[error("invalid gauge: {0}")]
    BadGauge(String),

    #[error("gauge mismatch between operands")]
    GaugeMismatch,

    #[error("not strictly positive")]
    NotStrictlyPositive,

    #[error("no standard part: {0}")]
    NoStandardPart(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("not ρ-moderate on probes: {0}")]
    NotModerate(String),

    #[error("moment system unsolvable: {0}")]
    MomentSystem(String),

    #[error("negative-part budget exceeded: ∫|ψ| = {achieved:.6} > 1 + η = {budget:.6}")]
    NegativePartBudget { achieved: f64, budget: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("exponential formula inapplicable; use direct solve: {0}")]
    NonCommuting(String),

    #[error("degenerate velocity: |λ̇| not strictly positive")]
    DegenerateVelocity,

    #[error("positive-definiteness failure: {0}")]
    PositivityFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
