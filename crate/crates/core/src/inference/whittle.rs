//! Whittle likelihood and the gain/offset nuisance profile.

use serde::{Deserialize, Serialize};

use crate::spectral::{ModelPsd, SpectrumEstimate, UniformGrid};
use crate::{Error, Result};

/// Minimum number of bins a fit window must contain.
pub const MIN_WINDOW_BINS: usize = 10;

/// Default carrier exclusion, in bins either side of the carrier.
pub const DEFAULT_CARRIER_EXCLUSION_BINS: f64 = 3.0;

/// Bins used by the likelihood: the union of `intervals` minus everything
/// within `carrier_exclusion` of `carrier_freq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    /// Closed frequency intervals `(lo, hi)` in Hz.
    pub intervals: Vec<(f64, f64)>,
    pub carrier_freq: f64,
    /// Half-width of the excluded region around the carrier, Hz.
    pub carrier_exclusion: f64,
}

impl FitWindow {
    pub fn new(intervals: Vec<(f64, f64)>, carrier_freq: f64, carrier_exclusion: f64) -> Self {
        FitWindow { intervals, carrier_freq, carrier_exclusion }
    }

    /// Positive frequencies of `grid` from a few bins above DC up to a few
    /// bins below Nyquist, carrier excluded by the default ±3 bins.
    pub fn positive_side(grid: &UniformGrid, sample_rate: f64, carrier_freq: f64) -> Self {
        let guard = 4.0 * grid.df;
        FitWindow {
            intervals: vec![(guard, sample_rate / 2.0 - guard)],
            carrier_freq,
            carrier_exclusion: DEFAULT_CARRIER_EXCLUSION_BINS * grid.df,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::InvalidConfig("fit window has no intervals".into()));
        }
        if !(self.carrier_exclusion >= 0.0 && self.carrier_exclusion.is_finite()) {
            return Err(Error::InvalidConfig(format!("carrier exclusion must be >= 0, got {}", self.carrier_exclusion)));
        }
        if !self.carrier_freq.is_finite() {
            return Err(Error::InvalidConfig("carrier frequency must be finite".into()));
        }
        let mut sorted = self.intervals.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(lo, hi) in &sorted {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("invalid interval ({lo}, {hi})")));
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].0 <= pair[0].1 {
                return Err(Error::InvalidConfig(format!(
                    "intervals ({}, {}) and ({}, {}) overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }

    /// Indices of `grid` inside the window, ascending.
    pub fn bins(&self, grid: &UniformGrid) -> Result<Vec<usize>> {
        self.validate()?;
        let f_lo = grid.f_start;
        let f_hi = grid.freq(grid.n - 1);
        let tol = 1e-9 * grid.df;
        for &(lo, hi) in &self.intervals {
            if lo < f_lo - tol || hi > f_hi + tol {
                return Err(Error::InvalidConfig(format!(
                    "interval ({lo}, {hi}) lies outside the spectrum grid [{f_lo}, {f_hi}]"
                )));
            }
        }
        let carrier_bin = grid.nearest(self.carrier_freq);
        let bins: Vec<usize> = (0..grid.n)
            .filter(|&i| {
                let f = grid.freq(i);
                Some(i) != carrier_bin
                    && (f - self.carrier_freq).abs() > self.carrier_exclusion
                    && self.intervals.iter().any(|&(lo, hi)| f >= lo - tol && f <= hi + tol)
            })
            .collect();
        if bins.len() < MIN_WINDOW_BINS {
            return Err(Error::WindowTooSmall { needed: MIN_WINDOW_BINS, got: bins.len() });
        }
        Ok(bins)
    }
}

/// Gain `A` and white floor `B` mapping a normalized model onto data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceParams {
    pub gain: f64,
    pub offset: f64,
}

/// `Σ log S_i + Ŝ_i/S_i` with `S = A d + B`.
pub(crate) fn nll_values(data: &[f64], density: &[f64], gain: f64, offset: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (i, (&y, &d)) in data.iter().zip(density).enumerate() {
        let s = gain * d + offset;
        if !(s > 0.0) {
            return Err(Error::NonPositiveModel(i));
        }
        sum += s.ln() + y / s;
    }
    Ok(sum)
}

/// Whittle negative log-likelihood of `est` under `A · model + B` over the
/// window's bins.
pub fn whittle_nll(est: &SpectrumEstimate, model: &ModelPsd, nuisance: &NuisanceParams, window: &FitWindow) -> Result<f64> {
    if !est.grid.matches(&model.grid) || est.power.len() != model.power.len() {
        return Err(Error::GridMismatch);
    }
    let bins = window.bins(&est.grid)?;
    let data: Vec<f64> = bins.iter().map(|&i| est.power[i]).collect();
    let density: Vec<f64> = bins.iter().map(|&i| model.power[i]).collect();
    nll_values(&data, &density, nuisance.gain, nuisance.offset).map_err(|e| match e {
        Error::NonPositiveModel(k) => Error::NonPositiveModel(bins[k]),
        other => other,
    })
}

/// Maximum-likelihood `(A, B)` for a fixed model shape, with the minimized NLL.
pub fn profile_nuisance(est: &SpectrumEstimate, model: &ModelPsd, window: &FitWindow) -> Result<(NuisanceParams, f64)> {
    if !est.grid.matches(&model.grid) || est.power.len() != model.power.len() {
        return Err(Error::GridMismatch);
    }
    let bins = window.bins(&est.grid)?;
    let data: Vec<f64> = bins.iter().map(|&i| est.power[i]).collect();
    let density: Vec<f64> = bins.iter().map(|&i| model.power[i]).collect();
    profile_values(&data, &density, None)
}

/// Indices of the `frac` largest (or smallest) values, in no particular order.
fn percentile_indices(values: &[f64], frac: f64, top: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let k = ((values.len() as f64 * frac).ceil() as usize).clamp(1, values.len());
    if top {
        idx.select_nth_unstable_by(k - 1, |&a, &b| values[b].total_cmp(&values[a]));
    } else {
        idx.select_nth_unstable_by(k - 1, |&a, &b| values[a].total_cmp(&values[b]));
    }
    idx.truncate(k);
    idx
}

fn median(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    let (_, upper, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..n / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Rescaled objective: data and density are divided by their means so `a`
/// and `b` are O(1).
struct Scaled<'a> {
    y: &'a [f64],
    d: &'a [f64],
}

impl Scaled<'_> {
    fn value(&self, a: f64, b: f64) -> f64 {
        let mut sum = 0.0;
        for (&y, &d) in self.y.iter().zip(self.d) {
            let s = a * d + b;
            if !(s > 0.0) {
                return f64::INFINITY;
            }
            sum += s.ln() + y / s;
        }
        sum
    }

    /// Gradient and Hessian in `(a, b)`.
    fn derivatives(&self, a: f64, b: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for (&y, &d) in self.y.iter().zip(self.d) {
            let s = a * d + b;
            let inv = 1.0 / s;
            let g1 = inv - y * inv * inv;
            let h1 = -inv * inv + 2.0 * y * inv * inv * inv;
            g[0] += g1 * d;
            g[1] += g1;
            h[0][0] += h1 * d * d;
            h[0][1] += h1 * d;
            h[1][1] += h1;
        }
        h[1][0] = h[0][1];
        (g, h)
    }
}

/// Newton step for `H p = -g`; falls back to scaled gradient descent when `H`
/// is not positive definite.
fn newton_direction(g: [f64; 2], h: [[f64; 2]; 2]) -> [f64; 2] {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if h[0][0] > 0.0 && det > 0.0 {
        [-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(h[0][0] * g[1] - h[1][0] * g[0]) / det]
    } else {
        let s0 = if h[0][0] > 0.0 { 1.0 / h[0][0] } else { 1.0 };
        let s1 = if h[1][1] > 0.0 { 1.0 / h[1][1] } else { 1.0 };
        [-g[0] * s0, -g[1] * s1]
    }
}

/// Inner `(A, B)` minimization on window values.
///
/// `A` starts from the ratio of data to model means over the top decile of
/// model bins, `B` from the median data value over the lowest decile (less the
/// model's contribution there). A projected Newton iteration with
/// backtracking then enforces `A > 0`, `B ≥ 0`. A `start` value, when it
/// gives a finite objective, replaces that initialization.
pub(crate) fn profile_values(data: &[f64], density: &[f64], start: Option<NuisanceParams>) -> Result<(NuisanceParams, f64)> {
    let n = data.len();
    if n < MIN_WINDOW_BINS {
        return Err(Error::WindowTooSmall { needed: MIN_WINDOW_BINS, got: n });
    }
    let d_max = density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let d_min = density.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(d_max > 0.0) || d_max - d_min <= 1e-12 * d_max.abs() {
        return Err(Error::Degenerate("model density is constant over the fit window".into()));
    }
    let y_scale = data.iter().sum::<f64>() / n as f64;
    if !(y_scale > 0.0 && y_scale.is_finite()) {
        return Err(Error::Degenerate("data spectrum is zero over the fit window".into()));
    }
    let d_scale = density.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    let y: Vec<f64> = data.iter().map(|v| v / y_scale).collect();
    let d: Vec<f64> = density.iter().map(|v| v / d_scale).collect();
    let obj = Scaled { y: &y, d: &d };

    let warm = start
        .map(|s| (s.gain * d_scale / y_scale, s.offset / y_scale))
        .filter(|&(a, b)| a > 0.0 && b >= 0.0 && obj.value(a, b).is_finite());
    let (a0, b0) = match warm {
        Some(ab) => ab,
        None => initial_guess(&obj, &y, &d, d_min / d_scale),
    };
    let (mut a, mut b) = (a0, b0);
    let mut f = obj.value(a, b);
    if !f.is_finite() {
        return Err(Error::Degenerate("no positive starting model".into()));
    }

    for _ in 0..200 {
        let (g, h) = obj.derivatives(a, b);
        let at_bound = b <= 0.0 && g[1] >= 0.0;
        let dir = if at_bound {
            // Active constraint B = 0: one-dimensional Newton in A.
            let step = if h[0][0] > 0.0 { -g[0] / h[0][0] } else { -g[0] };
            [step, 0.0]
        } else {
            newton_direction(g, h)
        };
        // Newton decrement: predicted reduction of the (shifted) NLL.
        let decrement = -(g[0] * dir[0] + g[1] * dir[1]);
        if decrement.abs() < 2e-10 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let na = a + t * dir[0];
            let nb = (b + t * dir[1]).max(0.0);
            if na > 0.0 {
                let nf = obj.value(na, nb);
                if nf <= f {
                    a = na;
                    b = nb;
                    f = nf;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(finish(a, b, y_scale, d_scale, data, density))
}

fn initial_guess(obj: &Scaled<'_>, y: &[f64], d: &[f64], d_min: f64) -> (f64, f64) {
    let peak = percentile_indices(d, 0.1, true);
    let floor = percentile_indices(d, 0.1, false);
    let mean_over = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
    let mut b = median(floor.iter().map(|&i| y[i]).collect()).max(0.0);
    let a = ((mean_over(y, &peak) - b) / mean_over(d, &peak)).max(1e-6);
    b = median(floor.iter().map(|&i| y[i] - a * d[i]).collect()).max(0.0);
    // Keep every model value positive at the start.
    if !obj.value(a, b).is_finite() {
        b = b.max(1e-6);
        if !obj.value(a, b).is_finite() {
            b = (-a * d_min).max(0.0) + 1e-3;
        }
    }
    (a, b)
}

fn finish(a: f64, b: f64, y_scale: f64, d_scale: f64, data: &[f64], density: &[f64]) -> (NuisanceParams, f64) {
    let nuisance = NuisanceParams { gain: a * y_scale / d_scale, offset: b * y_scale };
    let nll = nll_values(data, density, nuisance.gain, nuisance.offset).unwrap_or(f64::INFINITY);
    (nuisance, nll)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 / (1.0 + ((i as f64 - 40.0) / 5.0).powi(2)) + 1e-3).collect()
    }

    #[test]
    fn noiseless_recovery() {
        let d = shape(120);
        let y: Vec<f64> = d.iter().map(|v| 3.0 * v + 0.5).collect();
        let (p, nll) = profile_values(&y, &d, None).unwrap();
        assert!((p.gain / 3.0 - 1.0).abs() < 1e-6, "{p:?}");
        assert!((p.offset / 0.5 - 1.0).abs() < 1e-6, "{p:?}");
        let expected: f64 = y.iter().map(|s| s.ln() + 1.0).sum();
        assert!((nll - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn offset_stays_non_negative() {
        let d = shape(80);
        // Data lower than any positive-offset model in the wings.
        let y: Vec<f64> = d.iter().enumerate().map(|(i, v)| 2.0 * v * if i % 2 == 0 { 0.5 } else { 1.2 }).collect();
        let (p, _) = profile_values(&y, &d, None).unwrap();
        assert!(p.offset >= 0.0 && p.gain > 0.0);
    }

    #[test]
    fn constant_density_is_degenerate() {
        let d = vec![1.0; 50];
        let y = vec![2.0; 50];
        assert!(matches!(profile_values(&y, &d, None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn non_positive_model_reported() {
        let d = vec![1.0, -1.0, 1.0];
        assert!(matches!(nll_values(&[1.0; 3], &d, 1.0, 0.0), Err(Error::NonPositiveModel(1))));
    }

    #[test]
    fn window_bins_exclude_carrier() {
        let grid = UniformGrid { f_start: 0.0, df: 1.0, n: 101 };
        let w = FitWindow::new(vec![(10.0, 30.0), (40.0, 60.0)], 50.0, 3.0);
        let bins = w.bins(&grid).unwrap();
        assert_eq!(bins.len(), 21 + 21 - 7);
        assert!(!bins.contains(&50) && !bins.contains(&53) && bins.contains(&54));
        let w = FitWindow::new(vec![(10.0, 30.0), (25.0, 60.0)], 50.0, 3.0);
        assert!(w.bins(&grid).is_err());
        let w = FitWindow::new(vec![(10.0, 300.0)], 50.0, 3.0);
        assert!(w.bins(&grid).is_err());
        let w = FitWindow::new(vec![(10.0, 14.0)], 50.0, 3.0);
        assert!(matches!(w.bins(&grid), Err(Error::WindowTooSmall { .. })));
    }
}
