//! Thermal oscillator simulation, heterodyne phase-modulation spectra and
//! Whittle-likelihood parameter estimation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`sim`] integrates the Langevin equation of a damped harmonic oscillator
//!   and synthesizes the phase-modulated detector signal.
//! * [`spectral`] estimates power spectra (Hann-windowed periodograms averaged
//!   with Bartlett's method) and tests residuals against the chi-squared law.
//! * [`theory`] evaluates the exact phase-modulation spectrum as a
//!   Poisson-weighted series of self-convolutions of the position spectrum,
//!   its correlation-function counterpart, the narrow-band Bessel limits and
//!   intensity-noise broadening.
//! * [`inference`] fits spectral shape parameters by maximizing the Whittle
//!   likelihood with gain and offset profiled out, computes profile-likelihood
//!   densities and runs ensemble calibration studies.

pub mod error;
pub mod io;
pub mod inference;
pub mod sim;
pub mod spectral;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
