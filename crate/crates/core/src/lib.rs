//! Simulation and analysis of cold multi-species ion ensembles in linear RF
//! traps.
//!
//! - [`trap`]: closed-form trap, plasma, collision and heating-balance calculators.
//! - [`dynamics`]: the molecular-dynamics engine.
//! - [`analysis`]: synthetic CCD images, structure metrics, motional spectra,
//!   lineshape thermometry and image fitting.
//! - [`reactions`]: stochastic ion-neutral and photon-driven chemistry.
//! - [`rempd`]: rovibrational rate equations and rotational thermometry.
//! - [`scenario`]: config files, scheduled experiments and reproducible outputs.

pub mod analysis;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod io;
pub mod presets;
pub mod reactions;
pub mod rempd;
pub mod scenario;
pub mod trap;

pub use error::{Error, Result};
