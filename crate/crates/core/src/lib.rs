//! Discrete multilinear Fourier multipliers on the periodic torus.
//!
//! The crate evaluates operators of the form
//! `T(f_1, …, f_m)(x) = Σ a(ξ_1, …, ξ_m) f̂_1(ξ_1) ⋯ f̂_m(ξ_m) e^{i x·(ξ_1+⋯+ξ_m)}`
//! by a brute-force oracle and by a low-rank separable fast path, builds the
//! dyadic partitions those fast paths rely on, and computes Jacobian and
//! Hessian determinants numerically, through their Fourier symbols, and in
//! exact rational arithmetic.

pub mod determinants;
pub mod error;
pub mod function_spaces;
pub mod grid;
pub mod lp_decomp;
pub mod multilinear;
pub mod snapshot;
pub mod symbols;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, Spectrum};
pub use num_complex::Complex64;
