//! Langevin simulation of a thermally driven oscillator and synthesis of the
//! heterodyne phase-modulated detector signal.
//!
//! Random numbers come from ChaCha8 (a counter-based stream cipher generator,
//! `rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64(seed)`. Independent
//! parts of a run draw from distinct ChaCha streams: the thermal force uses
//! [`STREAM_THERMAL`], detector noise [`STREAM_DETECTOR`] and the intensity
//! drift [`STREAM_RIN`]. Gaussian variates use the ziggurat sampler from
//! `rand_distr::StandardNormal`.

mod signal;

pub use signal::{synthesize_signal, Modulation, SignalParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, BOLTZMANN};

pub const STREAM_THERMAL: u64 = 0;
pub const STREAM_DETECTOR: u64 = 1;
pub const STREAM_RIN: u64 = 2;

/// Largest allowed `dt * omega`.
pub const MAX_STEP_PHASE: f64 = 0.1;

/// Physical parameters of the damped oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Natural angular frequency, rad/s.
    pub omega: f64,
    /// Damping rate, 1/s.
    pub gamma: f64,
    /// Centre-of-mass temperature, K.
    pub temperature: f64,
    /// Mass, kg.
    pub mass: f64,
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("mass must be > 0, got {}", self.mass)));
        }
        Ok(())
    }

    /// Stationary position variance k_B T / (M Ω²).
    pub fn position_variance(&self) -> f64 {
        BOLTZMANN * self.temperature / (self.mass * self.omega * self.omega)
    }

    /// Stationary velocity variance k_B T / M.
    pub fn velocity_variance(&self) -> f64 {
        BOLTZMANN * self.temperature / self.mass
    }
}

/// How the slow relative intensity drift evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftModel {
    /// One offset r ~ N(0, R²) held for the whole run.
    ConstantPerRun,
    /// Deterministic ramp from -R to +R across the run.
    LinearRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RinDrift {
    /// Relative width R.
    pub width: f64,
    pub model: DriftModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Output sample rate, S/s.
    pub sample_rate: f64,
    /// Run length, s.
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub rin_drift: Option<RinDrift>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample_rate must be > 0, got {}",
                self.sample_rate
            )));
        }
        if !(self.duration.is_finite() && self.duration * self.sample_rate >= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "duration * sample_rate must be >= 2, got {}",
                self.duration * self.sample_rate
            )));
        }
        let ratio = 1.0 / (self.sample_rate * self.dt);
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(Error::InvalidConfig(format!(
                "1/(sample_rate*dt) must be a positive integer, got {ratio}"
            )));
        }
        if let Some(rin) = self.rin_drift {
            if !(rin.width >= 0.0 && rin.width < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "RIN width must lie in [0, 1), got {}",
                    rin.width
                )));
            }
        }
        Ok(())
    }

    /// Integrator steps per output sample.
    pub fn decimation(&self) -> usize {
        (1.0 / (self.sample_rate * self.dt)).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Position,
    Signal,
    External,
}

/// Provenance carried alongside the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub kind: SeriesKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub oscillator: Option<OscillatorParams>,
    #[serde(default)]
    pub signal: Option<SignalParams>,
    #[serde(default)]
    pub config: Option<SimulationConfig>,
}

impl SeriesMeta {
    pub fn external() -> Self {
        SeriesMeta { kind: SeriesKind::External, seed: None, oscillator: None, signal: None, config: None }
    }
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    sample_rate: f64,
    samples: Vec<f64>,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn new(sample_rate: f64, samples: Vec<f64>, meta: SeriesMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample_rate must be > 0, got {sample_rate}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample {i} is not finite")));
        }
        Ok(TimeSeries { sample_rate, samples, meta })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Integrates `z'' + Γ z' + Ω² z = w(t)` and returns the position sampled at
/// `config.sample_rate`.
///
/// The velocity is advanced first and the position is updated with the new
/// velocity (semi-implicit Euler–Maruyama). The thermal kick per step has
/// standard deviation `sqrt(2 k_B T Γ / M · dt)`, which makes the stationary
/// variance `k_B T / (M Ω²)` and the spectrum `2 k_B T Γ / M / ((ω²-Ω²)² + Γ²ω²)`.
/// The initial state is drawn from the stationary distribution, so no burn-in
/// is needed. Every `1/(sample_rate·dt)`-th state is kept, with no anti-alias
/// filtering.
pub fn simulate_trajectory(params: &OscillatorParams, config: &SimulationConfig) -> Result<TimeSeries> {
    params.validate()?;
    config.validate()?;
    let step_phase = config.dt * params.omega;
    if step_phase > MAX_STEP_PHASE {
        return Err(Error::UnstableStep(step_phase));
    }

    let n = config.n_samples();
    let k = config.decimation();
    let dt = config.dt;
    let damp = 1.0 - params.gamma * dt;
    let spring = params.omega * params.omega * dt;
    let kick = (2.0 * BOLTZMANN * params.temperature * params.gamma / params.mass * dt).sqrt();

    let mut rng = stream_rng(config.seed, STREAM_THERMAL);
    let mut z = params.position_variance().sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut v = params.velocity_variance().sqrt() * rng.sample::<f64, _>(StandardNormal);

    let mut samples = Vec::with_capacity(n);
    if kick == 0.0 {
        // Deterministic relaxation; the draws above were scaled by zero.
        for _ in 0..n {
            samples.push(z);
            for _ in 0..k {
                v = damp * v - spring * z;
                z += v * dt;
            }
        }
    } else {
        for _ in 0..n {
            samples.push(z);
            for _ in 0..k {
                let xi: f64 = rng.sample(StandardNormal);
                v = damp * v - spring * z + kick * xi;
                z += v * dt;
            }
        }
    }

    TimeSeries::new(
        config.sample_rate,
        samples,
        SeriesMeta {
            kind: SeriesKind::Position,
            seed: Some(config.seed),
            oscillator: Some(*params),
            signal: None,
            config: Some(*config),
        },
    )
}
