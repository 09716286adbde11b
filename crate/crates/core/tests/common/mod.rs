//! Oracles shared by the integration tests. Written from the closed forms,
//! independently of the library code.
#![allow(dead_code)]

use std::f64::consts::PI;

use levspec::inference::FitWindow;
use levspec::sim::{Modulation, OscillatorParams, SignalParams, SimulationConfig};

pub const OMEGA: f64 = 2.0 * PI * 100e3;
pub const F0: f64 = 3e6;
pub const RATE: f64 = 10e6;

/// `R_φφ(t)/Φ²` of a damped oscillator driven by white noise.
///
/// Underdamped: `e^{-Γt/2}[cos Ω₁t + (Γ/2Ω₁) sin Ω₁t]`, `Ω₁ = √(Ω² - Γ²/4)`.
/// Critical: `e^{-Ωt}(1 + Ωt)`.
/// Overdamped: `e^{-Γt/2}[cosh st + (Γ/2s) sinh st]`, `s = √(Γ²/4 - Ω²)`.
pub fn rho_oracle(omega: f64, gamma: f64, t: f64) -> f64 {
    let t = t.abs();
    let h = gamma / 2.0;
    if h == omega {
        return (-omega * t).exp() * (1.0 + omega * t);
    }
    if h < omega {
        let w1 = (omega * omega - h * h).sqrt();
        (-h * t).exp() * ((w1 * t).cos() + h / w1 * (w1 * t).sin())
    } else {
        let s = (h * h - omega * omega).sqrt();
        // cosh and sinh written with decaying exponentials only.
        let a = (-(h - s) * t).exp();
        let b = (-(h + s) * t).exp();
        0.5 * (a + b) + h / s * 0.5 * (a - b)
    }
}

/// `σ_zz(f)` written out from the position spectrum, unit integral.
pub fn sigma_oracle(omega: f64, gamma: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let d = w * w - omega * omega;
    omega * omega * 2.0 * gamma / (d * d + gamma * gamma * w * w)
}

/// `∫ σ_zz(f) cos(2πft) df` by composite Simpson on `[0, f_max]`, doubled.
pub fn rho_quadrature(omega: f64, gamma: f64, t: f64, f_max: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = f_max / n as f64;
    let g = |f: f64| sigma_oracle(omega, gamma, f) * (2.0 * PI * f * t).cos();
    let mut sum = g(0.0) + g(f_max);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    2.0 * sum * h / 3.0
}

/// Standard error of the sample variance of `n` samples of a stationary
/// Gaussian process with correlation `rho_oracle`, sampled at `rate`.
pub fn variance_standard_error(variance: f64, n: usize, rate: f64, omega: f64, gamma: f64) -> f64 {
    let mut sum = 1.0;
    for k in 1..n {
        let r = rho_oracle(omega, gamma, k as f64 / rate);
        sum += 2.0 * r * r * (1.0 - k as f64 / n as f64);
        if r * r < 1e-16 && k as f64 / rate > 40.0 / gamma.min(2.0 * omega * omega / gamma) {
            break;
        }
    }
    variance * (2.0 * sum / n as f64).sqrt()
}

pub fn oscillator(gamma: f64) -> OscillatorParams {
    OscillatorParams { omega: OMEGA, gamma, temperature: 300.0, mass: 1e-18 }
}

pub fn signal(phi: f64, noise_floor: f64) -> SignalParams {
    SignalParams { carrier_freq: F0, amplitude: 1.0, phase_offset: 0.0, modulation: Modulation::Phi(phi), noise_floor }
}

pub fn sim_config(duration: f64, seed: u64) -> SimulationConfig {
    SimulationConfig { dt: 1e-9, sample_rate: RATE, duration, seed, rin_drift: None }
}

/// Band around the carrier covering the first few harmonics of a 100 kHz
/// oscillator, with a 5 kHz carrier exclusion.
pub fn narrow_window(half_width: f64) -> FitWindow {
    FitWindow::new(vec![(F0 - half_width, F0 + half_width)], F0, 5e3)
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
