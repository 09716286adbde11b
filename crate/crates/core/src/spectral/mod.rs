//! Non-parametric spectral estimation: windowed periodograms, Bartlett
//! averaging and residual statistics against a model spectrum.

pub mod fft;
mod window;

pub use window::{Detrend, WindowKind, WindowSpec};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::sim::TimeSeries;
use crate::stats::{ks_test_chi2, KsTest};
use crate::{Error, Result};

/// Uniform frequency grid `f_i = f_start + i·df`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub f_start: f64,
    pub df: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn freq(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.df
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.freq(i)).collect()
    }

    /// Index of the bin nearest `f`, if it lies on the grid.
    pub fn nearest(&self, f: f64) -> Option<usize> {
        let x = ((f - self.f_start) / self.df).round();
        (x >= 0.0 && (x as usize) < self.n).then_some(x as usize)
    }

    pub fn matches(&self, other: &UniformGrid) -> bool {
        self.n == other.n
            && (self.df - other.df).abs() <= 1e-12 * self.df.abs()
            && (self.f_start - other.f_start).abs() <= 1e-9 * self.df.abs()
    }
}

/// Averaged periodogram on a two-sided (centred, ascending) or one-sided grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub grid: UniformGrid,
    pub power: Vec<f64>,
    /// Degrees of freedom, twice the number of averaged segments.
    pub nu: usize,
    pub segment_length: usize,
    pub n_segments: usize,
    pub sample_rate: f64,
    pub window: WindowSpec,
    pub one_sided: bool,
}

impl SpectrumEstimate {
    pub fn freqs(&self) -> Vec<f64> {
        self.grid.freqs()
    }

    /// Folds a two-sided estimate onto `0 ≤ f ≤ fs/2`.
    pub fn to_one_sided(&self) -> SpectrumEstimate {
        if self.one_sided {
            return self.clone();
        }
        let power = fold_centered(&self.power, self.segment_length);
        SpectrumEstimate {
            grid: UniformGrid { f_start: 0.0, df: self.grid.df, n: power.len() },
            power,
            one_sided: true,
            ..self.clone()
        }
    }
}

/// Folds a centred two-sided spectrum of a length-`len` DFT onto
/// `0 ≤ f ≤ fs/2`: positive and negative bins are summed, DC and Nyquist kept
/// once.
pub fn fold_centered(power: &[f64], len: usize) -> Vec<f64> {
    let half = len / 2;
    let zero = len / 2;
    let mut out = Vec::with_capacity(half + 1);
    out.push(power[zero]);
    for k in 1..=half {
        let pos = zero + k;
        let neg = power[zero - k];
        if pos < len {
            out.push(power[pos] + neg);
        } else {
            out.push(neg);
        }
    }
    out
}

/// Two-sided grid for a length-`len` DFT, ascending from `-⌊len/2⌋·df`.
pub fn centered_grid(len: usize, sample_rate: f64) -> UniformGrid {
    let df = sample_rate / len as f64;
    UniformGrid { f_start: -((len / 2) as f64) * df, df, n: len }
}

/// Map from centred index `i` to DFT bin index.
pub(crate) fn centered_to_fft(i: usize, len: usize) -> usize {
    (i + len - len / 2) % len
}

fn segment_power(segment: &[f64], sample_rate: f64, window: &WindowSpec, taper: &[f64], out: &mut [f64]) {
    let len = segment.len();
    let mean = match window.detrend {
        Detrend::Mean => segment.iter().sum::<f64>() / len as f64,
        Detrend::None => 0.0,
    };
    let mut buf: Vec<Complex64> =
        segment.iter().zip(taper).map(|(&x, &w)| Complex64::new((x - mean) * w, 0.0)).collect();
    fft::forward(&mut buf);
    let sum_w2: f64 = taper.iter().map(|w| w * w).sum();
    let scale = 1.0 / (sample_rate * sum_w2);
    for (i, o) in out.iter_mut().enumerate() {
        *o += buf[centered_to_fft(i, len)].norm_sqr() * scale;
    }
}

/// Single-segment periodogram `|Σ w_m x_m e^{-2πikm/M}|² / (fs Σ w_m²)`.
///
/// Normalized so that `Σ P_k · df` equals `Σ (w x)² / Σ w²`; for the
/// rectangular window that is the (detrended) mean square of the segment.
pub fn periodogram(x: &TimeSeries, window: &WindowSpec) -> Result<SpectrumEstimate> {
    let len = x.len();
    if len < 2 {
        return Err(Error::TooShort { needed: 2, got: len });
    }
    bartlett(x, len, window)
}

/// Bartlett estimate: average of `⌊N/M⌋` non-overlapping segment periodograms.
/// Trailing samples that do not fill a segment are discarded.
pub fn bartlett(x: &TimeSeries, segment_length: usize, window: &WindowSpec) -> Result<SpectrumEstimate> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if segment_length < 2 {
        return Err(Error::InvalidConfig(format!("segment length must be >= 2, got {segment_length}")));
    }
    if x.len() < segment_length {
        return Err(Error::TooShort { needed: segment_length, got: x.len() });
    }
    let fs = x.sample_rate();
    let n_segments = x.len() / segment_length;
    let taper = window.coefficients(segment_length);
    let mut power = vec![0.0; segment_length];
    for segment in x.samples().chunks_exact(segment_length) {
        segment_power(segment, fs, window, &taper, &mut power);
    }
    let inv = 1.0 / n_segments as f64;
    power.iter_mut().for_each(|p| *p *= inv);
    Ok(SpectrumEstimate {
        grid: centered_grid(segment_length, fs),
        power,
        nu: 2 * n_segments,
        segment_length,
        n_segments,
        sample_rate: fs,
        window: *window,
        one_sided: false,
    })
}

/// Model PSD sampled on an explicit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPsd {
    pub grid: UniformGrid,
    pub power: Vec<f64>,
}

/// Normalized residuals `Ŝ/S` and a Kolmogorov–Smirnov test of `νŜ/S`
/// against χ²_ν.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub bins: Vec<usize>,
    pub ratio: Vec<f64>,
    pub ks: KsTest,
    /// All ratios identical; the KS test is meaningless.
    pub degenerate: bool,
}

pub fn residuals(est: &SpectrumEstimate, model: &ModelPsd) -> Result<Residuals> {
    let bins: Vec<usize> = (0..est.grid.n).collect();
    residuals_in(est, model, &bins)
}

/// Residuals restricted to `bins`.
pub fn residuals_in(est: &SpectrumEstimate, model: &ModelPsd, bins: &[usize]) -> Result<Residuals> {
    if !est.grid.matches(&model.grid) || model.power.len() != est.power.len() {
        return Err(Error::GridMismatch);
    }
    if bins.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ratio = Vec::with_capacity(bins.len());
    for &i in bins {
        let s = *model.power.get(i).ok_or(Error::GridMismatch)?;
        if !(s > 0.0) {
            return Err(Error::NonPositiveModel(i));
        }
        ratio.push(est.power[i] / s);
    }
    let nu = est.nu as f64;
    let scaled: Vec<f64> = ratio.iter().map(|r| r * nu).collect();
    let ks = ks_test_chi2(&scaled, nu);
    let first = ratio[0];
    let degenerate = ratio.iter().all(|&r| (r - first).abs() <= 1e-12 * first.abs());
    Ok(Residuals { bins: bins.to_vec(), ratio, ks, degenerate })
}
