//! Numerical laboratory for vector-valued dyadic harmonic analysis.
//!
//! The crate provides finite-dimensional Banach spaces with randomized
//! (Rademacher/Gaussian) norm estimation and R-bound search, a periodic dyadic
//! grid with Haar calculus and maximal functions, the Rademacher maximal
//! function with its ℓ¹ counterexample, spectral Hodge–Dirac operators with
//! resolvents and H∞ functional calculus, Carleson norms, embeddings and
//! paraproducts, and an experiment harness that drives desk-scale studies of
//! Kato square-root estimates.

pub mod carleson;
pub mod dyadic;
pub mod error;
pub mod harness;
pub mod operators;
pub mod par;
pub mod radmax;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
pub use rng::RandomSource;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
