use std::f64::consts::PI;

use num_complex::Complex64;

use super::FrequencyGrid;
use crate::sim::OscillatorParams;
use crate::spectral::fft;
use crate::{Error, Result, BOLTZMANN};

/// Largest tolerated position-spectrum mass outside a grid.
pub const TAIL_MASS_LIMIT: f64 = 1e-4;

/// Position PSD `S_zz(ω) = (2 k_B T / M) Γ / ((ω² - Ω²)² + Γ² ω²)`, m²·s.
pub fn szz(params: &OscillatorParams, omega: f64) -> f64 {
    BOLTZMANN * params.temperature / params.mass * szz_unit(params.omega, params.gamma, omega)
}

/// `2 Γ / ((ω² - Ω²)² + Γ² ω²)`, i.e. [`szz`] with `k_B T / M = 1`.
pub fn szz_unit(omega0: f64, gamma: f64, omega: f64) -> f64 {
    let w2 = omega * omega;
    let d = w2 - omega0 * omega0;
    2.0 * gamma / (d * d + gamma * gamma * w2)
}

/// Normalized position spectrum `σ_zz(f) = S_zz(2πf)/<z²>`, unit integral
/// over the real line.
pub fn sigma_zz_at(omega0: f64, gamma: f64, f: f64) -> f64 {
    omega0 * omega0 * szz_unit(omega0, gamma, 2.0 * PI * f)
}

/// Mass of `σ_zz` outside `[-half_width, half_width]`.
///
/// Uses Simpson's rule on `∫₀¹ σ(W/u) W/u² du`, whose integrand is smooth once
/// the resonance lies well inside the grid.
pub fn sigma_zz_tail_mass(omega0: f64, gamma: f64, half_width: f64) -> f64 {
    let resonance = (omega0 + 20.0 * gamma) / (2.0 * PI);
    if half_width <= resonance {
        // Covers less than 20 linewidths beyond the peak: certainly too much.
        return 1.0;
    }
    let n = 2000;
    let h = 1.0 / n as f64;
    let integrand = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            sigma_zz_at(omega0, gamma, half_width / u) * half_width / (u * u)
        }
    };
    let mut sum = integrand(0.0) + integrand(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(i as f64 * h);
    }
    2.0 * sum * h / 3.0
}

/// `σ_zz` sampled on the grid's offsets from its centre.
pub fn sigma_zz(omega0: f64, gamma: f64, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    grid.validate()?;
    if !(omega0 > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidConfig("omega and gamma must be > 0".into()));
    }
    let half_width = grid.half_width();
    if sigma_zz_tail_mass(omega0, gamma, half_width) > TAIL_MASS_LIMIT {
        let mut required = (omega0 + 20.0 * gamma) / (2.0 * PI);
        while sigma_zz_tail_mass(omega0, gamma, required) > TAIL_MASS_LIMIT {
            required *= 1.25;
        }
        return Err(Error::InsufficientSpan { half_width, required });
    }
    Ok((0..grid.n_points).map(|i| sigma_zz_at(omega0, gamma, grid.offset(i))).collect())
}

/// Normalized position autocorrelation `ρ(t) = <z(0)z(t)>/<z²>` in closed form.
///
/// Covers the under-, critically and over-damped cases; near critical damping
/// the `sin(Ω₁t)/Ω₁` factor is evaluated as a series so the limit is smooth.
pub fn rho_zz(omega0: f64, gamma: f64, t: f64) -> f64 {
    let t = t.abs();
    let h = 0.5 * gamma;
    let disc = omega0 * omega0 - h * h;
    let q = disc.abs().sqrt();
    let qt = q * t;
    if qt < 1e-3 {
        // cos/cosh and sin(x)/x, sinh(x)/x to fourth order in x = Ω₁t.
        let s = if disc >= 0.0 { -1.0 } else { 1.0 };
        let x2 = s * qt * qt;
        let c = 1.0 + x2 / 2.0 + x2 * x2 / 24.0;
        let sc = 1.0 + x2 / 6.0 + x2 * x2 / 120.0;
        return (-h * t).exp() * (c + h * t * sc);
    }
    if disc > 0.0 {
        (-h * t).exp() * (qt.cos() + h / q * qt.sin())
    } else {
        // e^{-ht}(cosh qt + (h/q) sinh qt), written with decaying exponentials.
        let slow = ((q - h) * t).exp();
        let fast = (-(q + h) * t).exp();
        0.5 * (slow + fast) + 0.5 * h / q * (slow - fast)
    }
}

/// Phase autocorrelation sampled at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// `R_φφ(t)`: inverse Fourier transform of `Φ² σ_zz` on the time grid
/// conjugate to `grid` (`Δt = 1/(n df)`, lags centred on zero).
pub fn correlation_rphiphi(phi: f64, omega0: f64, gamma: f64, grid: &FrequencyGrid) -> Result<Correlation> {
    let sigma = sigma_zz(omega0, gamma, grid)?;
    let n = grid.n_points;
    let h = grid.half_points();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, s) in sigma.iter().enumerate() {
        buf[(k + n - h) % n] = Complex64::new(*s, 0.0);
    }
    fft::inverse(&mut buf);
    let dt = 1.0 / (n as f64 * grid.df);
    // Unit mass on the grid, so the zero lag is exactly Φ².
    let scale = phi * phi / buf[0].re;
    let times = (0..n).map(|j| (j as f64 - h as f64) * dt).collect();
    let values = (0..n).map(|j| buf[(j + n - h) % n].re * scale).collect();
    Ok(Correlation { times, values })
}
