//! Theoretical heterodyne spectrum of a carrier phase-modulated by a thermal
//! oscillator.
//!
//! All spectra are computed in baseband (centred on 0 Hz) and normalized so
//! that the carrier delta plus the continuous density carries unit mass. The
//! `n = 0` delta is never rasterized; it is reported as
//! [`TheorySpectrum::carrier_weight`].

mod bessel;
mod middleton;
mod position;
mod rin;

pub use bessel::{bessel_i_scaled, bessel_j_all, harmonic_bessel_weights, narrowband_weights};
pub use middleton::{
    middleton_series, poisson_truncation, series_in_lag_domain, spectrum_from_correlation, Truncation,
    DEFAULT_SERIES_TOL, SPAN_TOL,
};
pub use position::{correlation_rphiphi, rho_zz, sigma_zz, sigma_zz_at, sigma_zz_tail_mass, szz, szz_unit, Correlation, TAIL_MASS_LIMIT};
pub use rin::{gauss_hermite, rescaled, rin_average, rin_broadened, DEFAULT_QUAD_ORDER, MAX_RIN_WIDTH};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spectral shape parameters: RMS phase depth Φ (rad), natural angular
/// frequency Ω (rad/s) and damping Γ (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub phi: f64,
    pub omega: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(phi: f64, omega: f64, gamma: f64) -> Self {
        ModelParams { phi, omega, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidConfig(format!("phi must be >= 0, got {}", self.phi)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Odd-length uniform grid symmetric about `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub center: f64,
    pub df: f64,
    pub n_points: usize,
}

impl FrequencyGrid {
    /// Baseband grid covering at least `[-half_width, half_width]`.
    pub fn baseband(df: f64, half_width: f64) -> Result<Self> {
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::InvalidConfig(format!("df must be > 0, got {df}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidConfig(format!("half_width must be > 0, got {half_width}")));
        }
        let half = (half_width / df - 1e-9).ceil() as usize;
        Ok(FrequencyGrid { center: 0.0, df, n_points: 2 * half + 1 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.df > 0.0 && self.df.is_finite()) || self.n_points % 2 == 0 || self.n_points < 3 {
            return Err(Error::InvalidConfig("grid needs df > 0 and an odd number (>= 3) of points".into()));
        }
        Ok(())
    }

    pub fn half_points(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn half_width(&self) -> f64 {
        self.half_points() as f64 * self.df
    }

    /// Offset of point `i` from the centre.
    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - self.half_points() as f64) * self.df
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.center + self.offset(i)
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.freq(i)).collect()
    }

    pub fn shifted(&self, center: f64) -> Self {
        FrequencyGrid { center, ..*self }
    }
}

/// Normalized heterodyne spectrum: continuous density plus carrier delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySpectrum {
    pub grid: FrequencyGrid,
    pub params: ModelParams,
    /// Continuous part, 1/Hz, normalized with the carrier to unit mass.
    pub density: Vec<f64>,
    /// Mass of the unbroadened carrier line, `e^{-Φ²}` before broadening.
    pub carrier_weight: f64,
    /// Highest series order kept (0 for the correlation route).
    pub truncation_order: usize,
    /// Poisson mass of the discarded orders.
    pub truncation_bound: f64,
    /// Overall power scale `v0²`; density and carrier weight exclude it.
    pub scale: f64,
}

impl TheorySpectrum {
    /// Trapezoidal integral of the continuous part.
    pub fn continuous_mass(&self) -> f64 {
        let d = &self.density;
        let n = d.len();
        if n == 0 {
            return 0.0;
        }
        (d.iter().sum::<f64>() - 0.5 * (d[0] + d[n - 1])) * self.grid.df
    }

    pub fn total_mass(&self) -> f64 {
        self.carrier_weight + self.continuous_mass()
    }

    /// Same spectrum presented around carrier frequency `f0`.
    pub fn at_carrier(&self, f0: f64) -> TheorySpectrum {
        TheorySpectrum { grid: self.grid.shifted(f0), ..self.clone() }
    }

    /// Density times `v0²`.
    pub fn scaled_density(&self) -> Vec<f64> {
        self.density.iter().map(|d| d * self.scale).collect()
    }
}
