//! Finite range decompositions of lattice Green's functions.
//!
//! For a symmetric positive definite map `A` on `m×d` matrices, the
//! operator `𝒜 = ∇*A∇` on the periodic lattice `(Z/L^N Z)^d` has a Green's
//! function `𝒞 = 𝒜^{−1}` on zero-mean fields. This crate splits `𝒞` into
//! `N + 1` positive semidefinite pieces `𝒞_k` whose kernels are constant
//! beyond a range of order `L^k`, built from averaged local Dirichlet
//! projections on cubes. It also provides checks of the construction,
//! contour-integral derivatives with respect to `A`, and a hierarchical
//! sampler for the associated Gaussian fields.

pub mod analyticity;
pub mod cli;
pub mod config;
pub mod decomposition;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod projector;
pub mod sampling;
pub mod spectral;
pub mod verification;

pub use error::{Error, Result};
