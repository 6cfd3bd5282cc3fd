use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent constraints: {0}")]
    InconsistentConstraints(String),

    #[error("infeasible constraint system: {0}")]
    Infeasible(String),

    #[error("table is not admissible for the constraint set")]
    Inadmissible,

    #[error("non-finite solver state after step {step}")]
    NonFiniteState { step: usize },

    #[error("{scheme} loss requires {missing}")]
    MissingInput {
        scheme: &'static str,
        missing: &'static str,
    },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("fiber enumeration exceeded the limit of {limit} tables")]
    FiberTooLarge { limit: usize },

    #[error("Markov basis is empty")]
    EmptyBasis,

    #[error("internal invariant violated: {0}")]
    Invariant(&'static str),

    #[error("{0} normalizer is zero")]
    ZeroNormalizer(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
