use std::f64::consts::PI;

use num_complex::Complex64;

use super::position::sigma_zz;
use super::{FrequencyGrid, ModelParams, TheorySpectrum};
use crate::spectral::fft;
use crate::{Error, Result};

pub const DEFAULT_SERIES_TOL: f64 = 1e-8;

/// Poisson mass below which discarded orders are ignored by the grid-span
/// check.
pub const SPAN_TOL: f64 = 1e-8;

/// Where the Poisson-weighted series is cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Highest order kept.
    pub order: usize,
    /// `Σ_{m > order} e^{-x} x^m / m!`.
    pub bound: f64,
}

impl Truncation {
    /// Weights `e^{-x} x^n / n!` for `n = 0..=order`.
    pub fn weights(&self, x: f64) -> Vec<f64> {
        poisson_weights(x, self.order)
    }
}

fn poisson_weights(x: f64, order: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(order + 1);
    let mut cur = (-x).exp();
    w.push(cur);
    for n in 1..=order {
        cur *= x / n as f64;
        w.push(cur);
    }
    w
}

fn poisson_tail(x: f64, after: usize, w_after: f64) -> f64 {
    // Σ_{m > after} w_m by forward summation; w_after = w_{after}.
    let mut term = w_after;
    let mut sum = 0.0;
    let mut m = after;
    loop {
        m += 1;
        term *= x / m as f64;
        sum += term;
        if term == 0.0 || (m as f64 > x && term <= 1e-18 * sum) {
            return sum;
        }
    }
}

/// Smallest order `n` whose Poisson tail `Σ_{m>n} e^{-x}x^m/m!` is below `tol`.
pub fn poisson_truncation(x: f64, tol: f64) -> Truncation {
    if x == 0.0 {
        return Truncation { order: 0, bound: 0.0 };
    }
    let mut w = (-x).exp();
    let mut n = 0;
    loop {
        let tail = poisson_tail(x, n, w);
        if tail < tol || tail == 0.0 {
            return Truncation { order: n, bound: tail };
        }
        n += 1;
        w *= x / n as f64;
        if w == 0.0 && n as f64 > x {
            return Truncation { order: n, bound: 0.0 };
        }
    }
}

/// Applies the Poisson-weighted self-convolution series in the lag domain.
///
/// `rho` holds the normalized position autocorrelation (the Fourier transform
/// of `σ_zz`); each multiplication by `rho` is one further convolution with
/// `σ_zz`. On return `rho[j]` is replaced by `Σ_{n=1}^{order} w_n ρ_j^n`, the
/// transform of the continuous part of `σ_vv` (the `n = 0` carrier term is
/// left out).
pub fn series_in_lag_domain(rho: &mut [f64], phi: f64, trunc: &Truncation) {
    let x = phi * phi;
    let weights = trunc.weights(x);
    for r in rho.iter_mut() {
        let base = *r;
        let mut power = 1.0;
        let mut acc = 0.0;
        for w in &weights[1..] {
            power *= base;
            acc += w * power;
        }
        *r = acc;
    }
}

/// Normalized lag-domain correlation `ρ_j` of `σ_zz` on a grid zero-padded to
/// at least twice its length (rounded up to a 5-smooth FFT size). Index `j` is
/// a DFT lag index of the padded transform.
///
/// `σ_zz` is rescaled to unit mass on the grid so that `ρ_0 = 1` exactly; the
/// tail beyond the grid edge would otherwise leak out of the total power.
fn padded_rho(sigma: &[f64], grid: &FrequencyGrid) -> Vec<f64> {
    let n = grid.n_points;
    let h = grid.half_points();
    let len = fft::fast_len(2 * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (k, s) in sigma.iter().enumerate() {
        buf[(k + len - h) % len] = Complex64::new(*s, 0.0);
    }
    fft::inverse(&mut buf);
    let norm = buf[0].re;
    buf.iter().map(|c| c.re / norm).collect()
}

fn lag_to_density(g: &[f64], grid: &FrequencyGrid) -> Vec<f64> {
    let n = grid.n_points;
    let h = grid.half_points();
    let len = g.len();
    let mut buf: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft::forward(&mut buf);
    let dt = 1.0 / (len as f64 * grid.df);
    let mut density: Vec<f64> = (0..n).map(|k| buf[(k + len - h) % len].re * dt).collect();
    // Symmetrize exactly; the transform of an even sequence is even up to
    // round-off.
    for i in 0..h {
        let avg = 0.5 * (density[i] + density[n - 1 - i]);
        density[i] = avg;
        density[n - 1 - i] = avg;
    }
    density
}

fn check_inputs(params: &ModelParams, v0: f64, grid: &FrequencyGrid) -> Result<()> {
    params.validate()?;
    grid.validate()?;
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Error::InvalidConfig(format!("v0 must be > 0, got {v0}")));
    }
    Ok(())
}

/// Heterodyne spectrum as the Poisson-weighted series of self-convolutions
/// `σ_vv = e^{-Φ²} Σ_n Φ^{2n}/n! σ_zz^{⊛n}`.
///
/// Convolutions are carried out by FFT on the grid zero-padded to at least
/// twice its length. The series stops at the first order whose Poisson tail is below
/// `tol`; the carrier term is reported as `carrier_weight`.
pub fn middleton_series(params: &ModelParams, v0: f64, grid: &FrequencyGrid, tol: f64) -> Result<TheorySpectrum> {
    check_inputs(params, v0, grid)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!("tol must lie in (0, 1), got {tol}")));
    }
    let x = params.phi * params.phi;
    let trunc = poisson_truncation(x, tol);
    let span_order = poisson_truncation(x, tol.max(SPAN_TOL)).order;
    let required = (span_order as f64 * params.omega + 10.0 * params.gamma) / (2.0 * PI);
    if grid.half_width() < required {
        return Err(Error::InsufficientSpan { half_width: grid.half_width(), required });
    }
    let sigma = sigma_zz(params.omega, params.gamma, grid)?;
    let density = if trunc.order == 0 {
        vec![0.0; grid.n_points]
    } else {
        let mut rho = padded_rho(&sigma, grid);
        series_in_lag_domain(&mut rho, params.phi, &trunc);
        lag_to_density(&rho, grid)
    };
    Ok(TheorySpectrum {
        grid: *grid,
        params: *params,
        density,
        carrier_weight: (-x).exp(),
        truncation_order: trunc.order,
        truncation_bound: trunc.bound,
        scale: v0 * v0,
    })
}

/// Heterodyne spectrum from the correlation function
/// `R_vv(t) = v0² exp[R_φφ(t) - Φ²]`, Fourier transformed numerically.
///
/// The constant `e^{-Φ²}` (the carrier) is removed before the transform, so the
/// density is the continuous part only. Independent of the series truncation
/// and used to check [`middleton_series`].
pub fn spectrum_from_correlation(params: &ModelParams, v0: f64, grid: &FrequencyGrid) -> Result<TheorySpectrum> {
    check_inputs(params, v0, grid)?;
    let max_df = params.gamma / (2.0 * PI * 10.0);
    if grid.df > max_df {
        return Err(Error::Resolution { df: grid.df, max_df });
    }
    let sigma = sigma_zz(params.omega, params.gamma, grid)?;
    let x = params.phi * params.phi;
    let carrier = (-x).exp();
    let density = if x == 0.0 {
        vec![0.0; grid.n_points]
    } else {
        let rho = padded_rho(&sigma, grid);
        let g: Vec<f64> = rho.iter().map(|r| carrier * (x * r).exp_m1()).collect();
        lag_to_density(&g, grid)
    };
    Ok(TheorySpectrum {
        grid: *grid,
        params: *params,
        density,
        carrier_weight: carrier,
        truncation_order: 0,
        truncation_bound: 0.0,
        scale: v0 * v0,
    })
}
