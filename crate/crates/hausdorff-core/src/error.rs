//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by group backends, atom constructors, and operators.
#[derive(Debug, Error)]
pub enum Error {
    /// Haar measure on a non-compact backend cannot be normalized, so
    /// unrestricted sampling is refused.
    #[error("non-normalizable Haar measure: {0}")]
    NonNormalizableHaar(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An automorphism is unusable in the requested role (singular
    /// differential, zero modulus, wrong backend).
    #[error("invalid automorphism: {0}")]
    InvalidAutomorphism(String),

    /// An automorphism failed the subgroup-preservation screen; carries a
    /// description of the witness subgroup element.
    #[error("automorphism does not normalize K: witness {witness}")]
    DoesNotNormalizeK { witness: String },

    /// Input outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Atom construction rejected the requested geometry or function.
    #[error("atom construction failed: {0}")]
    AtomConstruction(String),

    /// Scenario or kernel configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
