//! Compressive ghost-imaging object tracking.
//!
//! Scenes are binary frames shown on the object-arm micromirror array; each
//! random binary pattern on the ghost arm yields one coincidence value equal
//! to the overlap of the pattern with the (inverted) frame. Subtracting the
//! measurement vectors of consecutive frames leaves only the change in the
//! scene, which is sparse and is recovered by total-variation minimization
//! from far fewer patterns than a raster scan needs.
//!
//! * [`scene`]: frames, sprites, frame differences, PGM loading
//! * [`sensing`]: patterns, sensing matrix, ideal forward model
//! * [`noise`]: Poisson shot and dark noise at a photon budget
//! * [`solver`]: TV reconstruction and its reference oracle
//! * [`tracking`]: differential measurements, change reconstruction, localization
//! * [`metrics`]: MSE, bits per photon, photon-budget sweeps

pub mod error;
pub mod metrics;
pub mod noise;
pub mod pgm;
pub mod rng;
pub mod scene;
pub mod sensing;
pub mod solver;
pub mod tracking;

pub use error::{Error, Result};
