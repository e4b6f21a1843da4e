//! Diagnostics: synthetic images, structure, spectra, lineshapes and image fits.

pub mod image;
pub mod structure;

pub use image::{image_similarity, render_ccd, CcdImage, ImageConfig, ViewPlane};
pub use structure::{structure_metrics, Phase, StructureConfig, StructureMetrics};
pub mod spectrum;
pub use spectrum::{detect_peaks, spectrum_fft, spectrum_sweep, FftConfig, Peak, PeakOptions, Spectrum, SpectrumMethod, SweepConfig};
pub mod lineshape;
pub use lineshape::{faddeeva, lineshape_fit, synthetic_lineshape, voigt, LineshapeFit};
pub mod fitting;
pub use fitting::{
    candidate_grid, fit_counts_refined, fit_ensemble, sc_upper_bound, shell_count, simulate_candidate, staged_fit,
    Candidate, EnsembleModel, FitReport, ScBound, StagedFit,
};
