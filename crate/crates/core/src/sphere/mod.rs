//! Pixelized spheres and field simulation.
//!
//! [`SphereGrid`] holds pixel centers and a symmetric neighbor adjacency for
//! either a HEALPix grid (the production scheme) or a subdivided icosahedron
//! (a simpler scheme kept as a cross-check). Fields on a grid are produced
//! either by running finite-width random networks ([`net`]) or by exact
//! spectral synthesis of the Gaussian limit field ([`synth`]), and are
//! reduced to local extrema counts ([`extrema`]) or empirical covariance
//! reports ([`cov`]).

mod cov;
mod extrema;
mod fastmath;
mod grid;
pub mod io;
mod net;
mod synth;

pub use cov::{empirical_frame_covariances, FrameCovarianceReport};
pub use extrema::{count_extrema, count_extrema_above, ExtremaCount};
pub use grid::{build_grid, GridScheme, SphereGrid};
pub use net::{
    simulate_network_at_points, simulate_network_field, simulate_network_taps, NetworkConfig,
};
pub use synth::{synthesize_gaussian_field, GridSynthesizer, SpectralDraw, SphericalSampler};

use serde::{Deserialize, Serialize};

use crate::kernel::AngularSpectrum;

/// Provenance of a sampled field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FieldSource {
    FiniteWidth(NetworkConfig),
    Spectral(AngularSpectrum),
}

/// One realization of field values on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub source: FieldSource,
    pub seed: u64,
}
