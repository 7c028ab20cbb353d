//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario parameters violate the basic constraints (N >= 2, k >= 1, d >= 2).
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// Input data violate a documented invariant (asymmetry, out-of-range moment, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Two objects that must share a scenario (k, d, N) do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The d^k strategy enumeration would exceed the configured cap.
    #[error(
        "enumerating {configs} hidden-strategy configurations exceeds the cap of {cap}; \
         reduce the number of settings or outcomes, or raise the cap"
    )]
    EnumerationCap { configs: u128, cap: u64 },

    /// The cyclic Jacobi eigensolver failed to converge; the input almost
    /// certainly contains non-finite entries.
    #[error("Jacobi eigensolver did not converge after {0} sweeps (non-finite input?)")]
    JacobiNoConvergence(usize),

    /// A measurement-record cell needed by an estimator has no samples.
    #[error("empty sampling cell: {0}")]
    EmptyCell(String),

    /// Moment data lie outside the pair-marginal polytope: the reconstructed
    /// averaged pair distribution has a negative entry.
    #[error("pair distribution entry P({s},{t}|{a},{b}) = {value} is negative")]
    NegativePairProbability {
        a: usize,
        b: usize,
        s: i32,
        t: i32,
        value: f64,
    },

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
