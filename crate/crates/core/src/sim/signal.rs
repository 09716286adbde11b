use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{stream_rng, DriftModel, SeriesKind, SeriesMeta, SimulationConfig, TimeSeries, STREAM_DETECTOR, STREAM_RIN};
use crate::{Error, Result};

/// Position-to-phase conversion: either a sensitivity κ (rad/m) or the RMS
/// phase depth Φ directly, in which case κ = Φ / sqrt(<z²>) is derived from the
/// oscillator's equipartition variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Kappa(f64),
    Phi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    /// Carrier frequency f0, Hz.
    pub carrier_freq: f64,
    /// Carrier amplitude v0.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Carrier phase θ0, rad.
    #[serde(default)]
    pub phase_offset: f64,
    pub modulation: Modulation,
    /// Two-sided PSD of additive white detector noise, 1/Hz.
    #[serde(default)]
    pub noise_floor: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::InvalidConfig(format!("carrier_freq must be > 0, got {}", self.carrier_freq)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidConfig(format!("amplitude must be > 0, got {}", self.amplitude)));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_floor must be >= 0, got {}", self.noise_floor)));
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::InvalidConfig("phase_offset must be finite".into()));
        }
        match self.modulation {
            Modulation::Kappa(k) if !k.is_finite() => Err(Error::InvalidConfig("kappa must be finite".into())),
            Modulation::Phi(p) if !(p >= 0.0 && p.is_finite()) => {
                Err(Error::InvalidConfig(format!("phi must be >= 0, got {p}")))
            }
            _ => Ok(()),
        }
    }
}

/// Builds `v(t) = v0 (1 + r(t)) sin(2π f0 t + θ0 + κ z(t)) + n(t)` from a
/// position series.
///
/// `r(t)` is zero unless `config.rin_drift` is set. `n(t)` is white Gaussian
/// noise with two-sided PSD `noise_floor`, i.e. variance `noise_floor * fs`.
pub fn synthesize_signal(z: &TimeSeries, sig: &SignalParams, config: &SimulationConfig) -> Result<TimeSeries> {
    sig.validate()?;
    let fs = z.sample_rate();
    let nyquist = 0.5 * fs;
    let bandwidth = z.meta.oscillator.map_or(0.0, |p| 10.0 * p.omega / (2.0 * PI));
    let required = sig.carrier_freq + bandwidth;
    if required > nyquist {
        return Err(Error::Aliasing { required, nyquist });
    }

    let kappa = match sig.modulation {
        Modulation::Kappa(k) => k,
        Modulation::Phi(phi) if phi == 0.0 => 0.0,
        Modulation::Phi(phi) => {
            let var = z
                .meta
                .oscillator
                .map(|p| p.position_variance())
                .ok_or_else(|| Error::InvalidConfig("phi given but the position series carries no oscillator parameters".into()))?;
            if var <= 0.0 {
                return Err(Error::InvalidConfig("phi > 0 requires a non-zero position variance".into()));
            }
            phi / var.sqrt()
        }
    };

    let n = z.len();
    let drift: Option<Box<dyn Fn(usize) -> f64>> = match config.rin_drift {
        None => None,
        Some(rin) => match rin.model {
            DriftModel::ConstantPerRun => {
                let mut rng = stream_rng(config.seed, STREAM_RIN);
                let r = rin.width * rng.sample::<f64, _>(StandardNormal);
                Some(Box::new(move |_| r))
            }
            DriftModel::LinearRamp => {
                let w = rin.width;
                let span = (n.max(2) - 1) as f64;
                Some(Box::new(move |j| -w + 2.0 * w * j as f64 / span))
            }
        },
    };

    let cycles_per_sample = sig.carrier_freq / fs;
    let noise_sd = (sig.noise_floor * fs).sqrt();
    let mut noise_rng = stream_rng(config.seed, STREAM_DETECTOR);

    let samples = z
        .samples()
        .iter()
        .enumerate()
        .map(|(j, &zj)| {
            let carrier = 2.0 * PI * (cycles_per_sample * j as f64).fract();
            let gain = sig.amplitude * (1.0 + drift.as_ref().map_or(0.0, |d| d(j)));
            let mut v = gain * (carrier + sig.phase_offset + kappa * zj).sin();
            if noise_sd > 0.0 {
                v += noise_sd * noise_rng.sample::<f64, _>(StandardNormal);
            }
            v
        })
        .collect();

    TimeSeries::new(
        fs,
        samples,
        SeriesMeta {
            kind: SeriesKind::Signal,
            seed: Some(config.seed),
            oscillator: z.meta.oscillator,
            signal: Some(*sig),
            config: Some(*config),
        },
    )
}
