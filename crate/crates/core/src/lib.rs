//! Hybrid quantum-classical dynamics on a discrete phase-space grid.
//!
//! A hybrid state is an operator-valued field `rho(x, p)`: a Hermitian,
//! non-negative `dim x dim` matrix attached to every point of a rectangular
//! `(x, p)` grid. Its pointwise trace is the classical phase-space
//! distribution, its phase-space integral is the quantum density operator.
//! The crate provides
//!
//! - dense operator algebra on a truncated Fock space, including coherent
//!   states and the normal / Weyl / anti-normal ordering maps ([`operator`],
//!   [`ordering`]),
//! - spectral (FFT) calculus on the phase-space grid ([`grid`]),
//! - the hybrid state model with marginals, conditionals and expectation
//!   values ([`hybrid`]),
//! - a compiler that expands the canonical hybrid equation of motion for
//!   polynomial Hamiltonians into an applicable term list, plus an RK4
//!   integrator ([`liouville`]),
//! - the impulsive system-detector interaction in closed form and as a
//!   numerically integrated kick, with pointer statistics ([`measurement`]),
//! - quantization / de-quantization maps that shift the classical-quantum
//!   boundary by one canonical pair, with expectation-robustness reports
//!   ([`cut`]),
//! - deterministic JSON / CSV serialization ([`io`]).

pub mod cut;
pub mod error;
pub mod grid;
pub mod hybrid;
pub mod io;
pub mod linalg;
pub mod liouville;
pub mod measurement;
pub mod operator;
pub mod ordering;
pub mod poly;

pub use error::{Error, Result};

/// Complex double, the scalar type used throughout.
pub type C64 = num_complex::Complex64;
