//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction violates an invariant (size, extent, cell area).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// The phase-space domain cannot hold the structure being placed on it.
    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    /// A field does not decay at the domain boundary; spectral derivatives
    /// would wrap it around.
    #[error("boundary leak: {0}")]
    BoundaryLeak(String),

    /// A state or distribution fails its normalization invariant.
    #[error("normalization: {0}")]
    Normalization(String),

    /// Conditional state requested where the classical density vanishes.
    #[error("unsupported point: {0}")]
    UnsupportedPoint(String),

    /// Fock-space truncation cannot represent the requested object.
    #[error("truncation: {0}")]
    Truncation(String),

    /// Polynomial degree exceeds the supported bound.
    #[error("degree: {0}")]
    Degree(String),

    /// Time integration violated its stability or drift budget.
    #[error("stability: {0}")]
    Stability(String),

    /// Closed-form measurement propagation requires the unit-variance
    /// Gaussian pointer state.
    #[error("non-Gaussian initial state: {0}")]
    NonGaussianInitial(String),

    /// Input is outside the range of the map being inverted.
    #[error("ill-posed input: {0}")]
    IllPosed(String),

    /// An operator fails a structural invariant (Hermiticity, idempotence,
    /// completeness, dimensions).
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
