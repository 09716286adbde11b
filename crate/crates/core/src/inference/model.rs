//! Expected periodogram of the heterodyne signal.
//!
//! The Bartlett estimate of a stationary signal has mean equal to the true
//! spectrum convolved with the window's spectral kernel (plus aliasing). Both
//! are reproduced exactly by working with sampled lags: the signal
//! autocorrelation at lag `τ = j/fs` is
//! `(v0²/2) cos(2πf0τ) exp[Φ²(ρ(τ) - 1)]`, which is weighted with the window
//! autocorrelation and transformed back with one FFT of the segment length.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::NuisanceParams;
use crate::spectral::{centered_to_fft, fft, fold_centered, ModelPsd, SpectrumEstimate, UniformGrid, WindowSpec};
use crate::theory::{rho_zz, rin_average, ModelParams, MAX_RIN_WIDTH};

/// Lags between exact re-evaluations of the correlation recurrence.
const ANCHOR_EVERY: usize = 256;
use crate::{Error, Result};

/// Fixed RIN broadening applied to the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RinSetting {
    /// Relative intensity width R.
    pub width: f64,
    /// Gauss–Hermite order.
    pub order: usize,
}

impl RinSetting {
    pub fn validate(&self) -> Result<()> {
        if !(self.width >= 0.0 && self.width < MAX_RIN_WIDTH) {
            return Err(Error::InvalidConfig(format!("RIN width must lie in [0, {MAX_RIN_WIDTH}), got {}", self.width)));
        }
        if self.order < 3 {
            return Err(Error::InvalidConfig(format!("quadrature order must be >= 3, got {}", self.order)));
        }
        Ok(())
    }
}

/// Expected periodogram on the grid of a particular estimate, in units where
/// the gain `A` equals `v0²/4`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    grid: UniformGrid,
    segment_length: usize,
    sample_rate: f64,
    carrier_freq: f64,
    one_sided: bool,
    include_carrier: bool,
    rin: Option<RinSetting>,
    /// `2 c_j cos(2π f0 j/fs) / (fs Σw²)` for `j = 0..M`.
    lag_weight: Vec<f64>,
}

/// Autocorrelation `c_j = Σ_m w_m w_{m+j}` of a taper, `j = 0..len`.
fn taper_autocorrelation(w: &[f64]) -> Vec<f64> {
    let len = w.len();
    let mut buf: Vec<Complex64> = w.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(2 * len, Complex64::new(0.0, 0.0));
    fft::forward(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    fft::inverse(&mut buf);
    let scale = 1.0 / (2 * len) as f64;
    buf[..len].iter().map(|c| c.re * scale).collect()
}

/// `ρ(j·dt)` for `j = 0..n`, by complex (or real, when overdamped) geometric
/// recurrence re-anchored every few hundred lags. Values whose contribution
/// `x·|ρ|` has decayed below 1e-18 are set to zero.
fn rho_sequence(omega0: f64, gamma: f64, dt: f64, n: usize, x: f64) -> Vec<f64> {
    let h = 0.5 * gamma;
    let disc = omega0 * omega0 - h * h;
    let q = disc.abs().sqrt();
    let mut out = vec![0.0; n];
    if disc.abs() < 1e-6 * omega0 * omega0 {
        // Near critical damping the two-exponential split cancels badly.
        for (j, o) in out.iter_mut().enumerate() {
            *o = rho_zz(omega0, gamma, j as f64 * dt);
        }
        return out;
    }
    let floor = 1e-18 / x.max(1e-300);
    if disc > 0.0 {
        // ρ = Re[(1 - i h/q) e^{(-h + iq)t}].
        let coef = Complex64::new(1.0, -h / q);
        let envelope = coef.norm();
        let step = Complex64::new(-h * dt, q * dt).exp();
        let mut z = Complex64::new(1.0, 0.0);
        for (j, o) in out.iter_mut().enumerate() {
            if j % ANCHOR_EVERY == 0 {
                let t = j as f64 * dt;
                if envelope * (-h * t).exp() < floor {
                    break;
                }
                z = Complex64::new(-h * t, q * t).exp();
            }
            *o = (coef * z).re;
            z *= step;
        }
    } else {
        // ρ = c₊ e^{-(h-q)t} + c₋ e^{-(h+q)t}.
        let (cp, cm) = (0.5 * (1.0 + h / q), 0.5 * (1.0 - h / q));
        let (sp, sm) = ((-(h - q) * dt).exp(), (-(h + q) * dt).exp());
        let (mut ep, mut em) = (1.0, 1.0);
        for (j, o) in out.iter_mut().enumerate() {
            if j % ANCHOR_EVERY == 0 {
                let t = j as f64 * dt;
                ep = (-(h - q) * t).exp();
                em = (-(h + q) * t).exp();
                if (cp.abs() * ep + cm.abs() * em) < floor {
                    break;
                }
            }
            *o = cp * ep + cm * em;
            ep *= sp;
            em *= sm;
        }
    }
    out
}

impl ObservationModel {
    /// Model matching `est` (grid, segment length, window and sidedness) for a
    /// carrier at `carrier_freq`.
    pub fn for_estimate(est: &SpectrumEstimate, carrier_freq: f64) -> Result<Self> {
        Self::new(est.segment_length, est.sample_rate, &est.window, est.one_sided, carrier_freq)
    }

    pub fn new(
        segment_length: usize,
        sample_rate: f64,
        window: &WindowSpec,
        one_sided: bool,
        carrier_freq: f64,
    ) -> Result<Self> {
        if segment_length < 2 {
            return Err(Error::InvalidConfig(format!("segment length must be >= 2, got {segment_length}")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample rate must be > 0, got {sample_rate}")));
        }
        if !(carrier_freq > 0.0 && carrier_freq < sample_rate / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "carrier frequency must lie in (0, {}), got {carrier_freq}",
                sample_rate / 2.0
            )));
        }
        let taper = window.coefficients(segment_length);
        let sum_w2: f64 = taper.iter().map(|w| w * w).sum();
        let c = taper_autocorrelation(&taper);
        let norm = 1.0 / (sample_rate * sum_w2);
        let lag_weight = c
            .iter()
            .enumerate()
            .map(|(j, cj)| {
                let phase = (carrier_freq * j as f64 / sample_rate).fract();
                2.0 * cj * (2.0 * PI * phase).cos() * norm
            })
            .collect();
        let grid = if one_sided {
            UniformGrid { f_start: 0.0, df: sample_rate / segment_length as f64, n: segment_length / 2 + 1 }
        } else {
            crate::spectral::centered_grid(segment_length, sample_rate)
        };
        Ok(ObservationModel {
            grid,
            segment_length,
            sample_rate,
            carrier_freq,
            one_sided,
            include_carrier: true,
            rin: None,
            lag_weight,
        })
    }

    /// Leaves the carrier line (and its window leakage) out of the model.
    pub fn without_carrier(mut self) -> Self {
        self.include_carrier = false;
        self
    }

    pub fn with_rin(mut self, rin: Option<RinSetting>) -> Result<Self> {
        if let Some(r) = &rin {
            r.validate()?;
        }
        self.rin = rin.filter(|r| r.width > 0.0);
        Ok(self)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn carrier_freq(&self) -> f64 {
        self.carrier_freq
    }

    pub fn rin(&self) -> Option<RinSetting> {
        self.rin
    }

    fn base_density(&self, params: &ModelParams) -> Result<Vec<f64>> {
        params.validate()?;
        let m = self.segment_length;
        let x = params.phi * params.phi;
        let dt = 1.0 / self.sample_rate;
        let carrier = (-x).exp();
        let rho = rho_sequence(params.omega, params.gamma, dt, m, x);
        let g: Vec<f64> = rho
            .iter()
            .zip(&self.lag_weight)
            .map(|(&r, w)| {
                let e = if self.include_carrier { (x * r).exp() } else { (x * r).exp_m1() };
                carrier * e * w
            })
            .collect();
        // Fold negative lags onto the length-M DFT; the j = 0 term appears once.
        let mut buf = Vec::with_capacity(m);
        buf.push(Complex64::new(g[0], 0.0));
        for j in 1..m {
            buf.push(Complex64::new(g[j] + g[m - j], 0.0));
        }
        fft::forward(&mut buf);
        let centred: Vec<f64> = (0..m).map(|i| buf[centered_to_fft(i, m)].re).collect();
        Ok(if self.one_sided { fold_centered(&centred, m) } else { centred })
    }

    /// Expected periodogram for unit gain and zero offset.
    pub fn density(&self, params: &ModelParams) -> Result<Vec<f64>> {
        match self.rin {
            Some(r) => rin_average(params, r.width, r.order, |p| self.base_density(p)),
            None => self.base_density(params),
        }
    }

    /// `A · density + B` on the model grid.
    pub fn psd(&self, params: &ModelParams, nuisance: &NuisanceParams) -> Result<ModelPsd> {
        let d = self.density(params)?;
        Ok(ModelPsd { grid: self.grid, power: d.iter().map(|v| nuisance.gain * v + nuisance.offset).collect() })
    }
}
