//! Expected critical points of isotropic Gaussian random fields on spheres.
//!
//! The crate is organized around the pipeline that takes a network activation
//! function to verified predictions about the field it induces in the
//! infinite-width limit:
//!
//! * [`kernel`] — covariance kernel of a random network: Hermite expansion,
//!   closed forms, depth composition, derivatives at the diagonal, regime
//!   classification and the angular power spectrum on the 2-sphere.
//! * [`goi`] — Gaussian Orthogonally Invariant random matrices: sampling,
//!   ordered-eigenvalue density and Monte Carlo expectations of
//!   determinant-type statistics, with an independent eigenvalue oracle.
//! * [`kacrice`] — expected number of critical points by index, with and
//!   without a level threshold, at finite depth, plus the depth-asymptotic
//!   constants and regime formulas.
//! * [`sphere`] — pixelized spheres (HEALPix and icosphere), finite-width
//!   network field simulation, exact spectral synthesis of the limit field,
//!   local extrema counting and empirical covariance validation.
//!
//! Everything that consumes randomness takes an explicit `u64` seed and is
//! bit-reproducible regardless of the number of worker threads; see [`exec`].

pub mod error;
pub mod exec;
pub mod goi;
pub mod kacrice;
pub mod kernel;
pub mod quad;
pub mod sphere;

pub use error::{Error, Result};
