//! Experiment harness around the `rowsketch` library: synthetic instances,
//! stream construction, exact distortion measurement via linear programs,
//! per-seed experiment drivers with machine-readable reports, and the
//! acceptance suite the integration tests run.

pub mod acceptance;
pub mod distortion;
pub mod experiments;
pub mod pgm;
pub mod report;
pub mod synth;

pub use distortion::{measure_distortion_linf, spectral_stretch, DistortionReport};
pub use report::{ExperimentConfig, Report, ReportFormat, SeedOutcome};
pub use synth::gen_synthetic;
