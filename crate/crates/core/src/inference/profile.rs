//! Profile-likelihood scans and the densities derived from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{free_params, log_sd_estimates, FitResult, Likelihood, Param, SubProblem};
use super::whittle::NuisanceParams;
use crate::spectral::SpectrumEstimate;
use crate::theory::ModelParams;
use crate::{Error, Result};

/// Edge mass above which a scan grid is widened.
pub const EDGE_MASS_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    /// Central credible level of the reported interval.
    pub level: f64,
    /// Grid points for an automatic grid.
    pub n_points: usize,
    /// Half-width of an automatic grid in estimated standard deviations.
    pub span_sd: f64,
    /// Explicit grid; disables automatic widening.
    pub grid: Option<Vec<f64>>,
    /// Widening passes allowed when density reaches the grid edge.
    pub max_widen: usize,
    /// Parameters held at their MLE values in addition to the scanned one
    /// (a conditional rather than a profile scan).
    pub fixed: Vec<Param>,
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            level: 0.68,
            n_points: 41,
            span_sd: 5.0,
            grid: None,
            max_widen: 4,
            fixed: vec![],
            tol: 1e-3,
            max_evals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileScan {
    pub param: Param,
    pub grid: Vec<f64>,
    pub nll: Vec<f64>,
    pub density: Vec<f64>,
    pub interval: Interval,
    pub mean: f64,
    pub sd: f64,
    pub mle: f64,
    pub likelihood_scale: f64,
    /// Co-fitted parameters at each grid point.
    pub trajectory: Vec<ModelParams>,
    pub nuisance: Vec<NuisanceParams>,
    /// Larger of the probability masses in the first and last grid cells.
    pub edge_mass: f64,
    pub fixed: Vec<Param>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// `exp(-scale (L - min L))`, normalized by the trapezoidal rule.
pub fn density_from_nll(grid: &[f64], nll: &[f64], scale: f64) -> Result<Vec<f64>> {
    if grid.len() < 2 || grid.len() != nll.len() {
        return Err(Error::InvalidConfig("density needs at least two grid points and matching values".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("density grid must be strictly increasing".into()));
    }
    let min = nll.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Degenerate("no finite likelihood values on the grid".into()));
    }
    let raw: Vec<f64> = nll.iter().map(|&v| if v.is_finite() { (-scale * (v - min)).exp() } else { 0.0 }).collect();
    let mass = trapezoid(grid, &raw);
    Ok(raw.iter().map(|v| v / mass).collect())
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Mean and standard deviation of a normalized density.
pub fn moments(grid: &[f64], density: &[f64]) -> (f64, f64) {
    let first: Vec<f64> = grid.iter().zip(density).map(|(x, d)| x * d).collect();
    let mean = trapezoid(grid, &first);
    let second: Vec<f64> = grid.iter().zip(density).map(|(x, d)| (x - mean).powi(2) * d).collect();
    (mean, trapezoid(grid, &second).max(0.0).sqrt())
}

/// Inverse of the cumulative distribution of a piecewise-linear density.
fn quantile(grid: &[f64], density: &[f64], q: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        let (d0, d1) = (density[i], density[i + 1]);
        let cell = 0.5 * h * (d0 + d1);
        if acc + cell >= q && cell > 0.0 {
            // Solve acc + h (d0 u + (d1 - d0) u²/2) = q for u in [0, 1].
            let target = (q - acc) / h;
            let a = 0.5 * (d1 - d0);
            let u = if a.abs() < 1e-14 * d0.abs().max(d1.abs()) {
                target / d0
            } else {
                (-d0 + (d0 * d0 + 4.0 * a * target).max(0.0).sqrt()) / (2.0 * a)
            };
            return grid[i] + h * u.clamp(0.0, 1.0);
        }
        acc += cell;
    }
    grid[grid.len() - 1]
}

/// Central credible interval of a normalized density.
pub fn credible_interval(grid: &[f64], density: &[f64], level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("credible level must lie in (0, 1), got {level}")));
    }
    let tail = 0.5 * (1.0 - level);
    Ok(Interval { level, lo: quantile(grid, density, tail), hi: quantile(grid, density, 1.0 - tail) })
}

fn edge_masses(grid: &[f64], density: &[f64]) -> (f64, f64) {
    let n = grid.len();
    let first = 0.5 * (grid[1] - grid[0]) * (density[0] + density[1]);
    let last = 0.5 * (grid[n - 1] - grid[n - 2]) * (density[n - 2] + density[n - 1]);
    (first, last)
}

struct Point {
    params: ModelParams,
    nuisance: NuisanceParams,
    nll: f64,
    converged: bool,
}

/// Fits the non-fixed parameters at each grid value, walking outward from
/// index `centre` with warm starts.
fn scan(
    lik: &Likelihood,
    fit: &FitResult,
    param: Param,
    grid: &[f64],
    free: &[Param],
    scales: &[f64],
    options: &ProfileOptions,
) -> Vec<Point> {
    let mle = param.get(&fit.model);
    let centre = (0..grid.len()).min_by(|&a, &b| (grid[a] - mle).abs().total_cmp(&(grid[b] - mle).abs())).unwrap();
    let fit_at = |start: &ModelParams, value: f64| -> Point {
        let mut s = *start;
        param.set(&mut s, value);
        let sub = SubProblem { lik, start: s, free: free.to_vec(), scales: scales.to_vec() }.minimize(
            options.tol,
            options.max_evals,
            0,
        );
        let (nuisance, nll) = lik
            .evaluate(&sub.params)
            .unwrap_or((NuisanceParams { gain: f64::NAN, offset: f64::NAN }, f64::INFINITY));
        Point { params: sub.params, nuisance, nll, converged: sub.converged }
    };
    let walk = |indices: Vec<usize>| -> Vec<(usize, Point)> {
        let mut start = fit.model;
        let mut out = Vec::with_capacity(indices.len());
        for i in indices {
            let p = fit_at(&start, grid[i]);
            if p.nll.is_finite() {
                start = p.params;
            }
            out.push((i, p));
        }
        out
    };
    let (up, down) = rayon::join(
        || walk((centre..grid.len()).collect()),
        || walk((0..centre).rev().collect()),
    );
    let mut points: Vec<Option<Point>> = (0..grid.len()).map(|_| None).collect();
    for (i, p) in up.into_iter().chain(down) {
        points[i] = Some(p);
    }
    points.into_iter().map(|p| p.expect("every grid point visited")).collect()
}

/// Standard deviation of `param` from the curvature of the profiled NLL,
/// never smaller than the conditional one.
fn estimate_sd(
    lik: &Likelihood,
    fit: &FitResult,
    param: Param,
    free: &[Param],
    scales: &[f64],
    options: &ProfileOptions,
) -> f64 {
    let mle = param.get(&fit.model);
    let (conditional, _) = log_sd_estimates(lik, &fit.model, &[param], 0.05);
    let conditional = conditional[0] * mle;
    if free.is_empty() {
        return conditional;
    }
    let h = 2.0 * conditional;
    if mle - h <= 0.0 {
        return conditional;
    }
    let at = |v: f64| {
        let mut p = fit.model;
        param.set(&mut p, v);
        SubProblem { lik, start: p, free: free.to_vec(), scales: scales.to_vec() }
            .minimize(options.tol, options.max_evals, 0)
            .nll
    };
    let c = (at(mle + h) - 2.0 * fit.nll + at(mle - h)) / (h * h);
    if c > 0.0 && c.is_finite() {
        (1.0 / (c * lik.scale()).sqrt()).max(conditional)
    } else {
        conditional
    }
}

fn auto_grid(mle: f64, below: f64, above: f64, n: usize) -> Vec<f64> {
    let lo = (mle - below).max(mle * 0.02);
    let hi = mle + above;
    let n = n.max(5) | 1;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Profile likelihood of one parameter: every other free parameter is
/// re-fitted at each grid value (those in `options.fixed`, and those fixed in
/// the original fit, stay at their fitted values).
pub fn profile_scan(est: &SpectrumEstimate, fit: &FitResult, param: Param, options: &ProfileOptions) -> Result<ProfileScan> {
    if !fit.converged {
        return Err(Error::InvalidConfig("profile scans need a converged fit".into()));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidConfig(format!("credible level must lie in (0, 1), got {}", options.level)));
    }
    let lik = Likelihood::new(est, &fit.window, fit.rin, fit.include_carrier)?;
    let mut held = fit.fixed.clone();
    held.extend(options.fixed.iter().copied());
    held.push(param);
    let free = free_params(&held);
    let (scales, _) = log_sd_estimates(&lik, &fit.model, &free, 1e-2);
    let mle = param.get(&fit.model);
    let mut warnings = Vec::new();

    let (mut grid, adaptive) = match &options.grid {
        Some(g) => {
            if g.len() < 3 || g.windows(2).any(|w| !(w[1] > w[0])) || g[0] <= 0.0 {
                return Err(Error::InvalidConfig("profile grid must be positive, increasing, with >= 3 points".into()));
            }
            (g.clone(), false)
        }
        None => {
            let sd = estimate_sd(&lik, fit, param, &free, &scales, options);
            let half = options.span_sd * sd;
            (auto_grid(mle, half, half, options.n_points), true)
        }
    };
    let mut widen = 0;
    loop {
        let points = scan(&lik, fit, param, &grid, &free, &scales, options);
        let nll: Vec<f64> = points.iter().map(|p| p.nll).collect();
        let density = density_from_nll(&grid, &nll, lik.scale())?;
        let (first, last) = edge_masses(&grid, &density);
        let at_floor = grid[0] <= mle * 0.02 * (1.0 + 1e-12);
        let grow_low = first > EDGE_MASS_LIMIT && !at_floor;
        let grow_high = last > EDGE_MASS_LIMIT;
        if adaptive && (grow_low || grow_high) && widen < options.max_widen {
            widen += 1;
            let below = (mle - grid[0]) * if grow_low { 1.6 } else { 1.0 };
            let above = (grid[grid.len() - 1] - mle) * if grow_high { 1.6 } else { 1.0 };
            grid = auto_grid(mle, below, above, options.n_points);
            continue;
        }
        let edge_mass = first.max(last);
        if edge_mass > EDGE_MASS_LIMIT {
            warnings.push(format!("density mass {edge_mass:.2e} in an edge cell; interval may be truncated"));
        }
        let converged = points.iter().all(|p| p.converged && p.nll.is_finite());
        if !converged {
            warnings.push("some profile points did not converge".into());
        }
        let interval = credible_interval(&grid, &density, options.level)?;
        let (mean, sd) = moments(&grid, &density);
        return Ok(ProfileScan {
            param,
            grid,
            nll,
            density,
            interval,
            mean,
            sd,
            mle,
            likelihood_scale: lik.scale(),
            trajectory: points.iter().map(|p| p.params).collect(),
            nuisance: points.iter().map(|p| p.nuisance).collect(),
            edge_mass,
            fixed: options.fixed.clone(),
            converged,
            warnings,
        });
    }
}

/// Two-parameter probability density on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDensity {
    pub params: (Param, Param),
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major, `density[i][j]` at `(x[i], y[j])`.
    pub density: Vec<Vec<f64>>,
    pub correlation: f64,
}

/// Joint density of two parameters with the third held at its fitted value
/// and the nuisance parameters profiled.
pub fn joint_density(est: &SpectrumEstimate, fit: &FitResult, params: (Param, Param), x: &[f64], y: &[f64]) -> Result<JointDensity> {
    joint_density_with(est, fit, params, x, y, None)
}

/// As [`joint_density`]; with `known` the gain and offset are held at the
/// given values instead of profiled, as for simulated data of known scale.
pub fn joint_density_with(
    est: &SpectrumEstimate,
    fit: &FitResult,
    params: (Param, Param),
    x: &[f64],
    y: &[f64],
    known: Option<NuisanceParams>,
) -> Result<JointDensity> {
    if params.0 == params.1 {
        return Err(Error::InvalidConfig("joint density needs two distinct parameters".into()));
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidConfig("joint grid needs at least two points per axis".into()));
    }
    let lik = Likelihood::new(est, &fit.window, fit.rin, fit.include_carrier)?;
    let nll: Vec<Vec<f64>> = x
        .par_iter()
        .map(|&xv| {
            y.iter()
                .map(|&yv| {
                    let mut p = fit.model;
                    params.0.set(&mut p, xv);
                    params.1.set(&mut p, yv);
                    match &known {
                        Some(n) => lik.nll_at(&p, n),
                        None => lik.nll(&p),
                    }
                })
                .collect()
        })
        .collect();
    let min = nll.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Degenerate("no finite likelihood values on the joint grid".into()));
    }
    let raw: Vec<Vec<f64>> =
        nll.iter().map(|row| row.iter().map(|v| (-lik.scale() * (v - min)).exp()).collect()).collect();
    let row_mass: Vec<f64> = raw.iter().map(|row| trapezoid(y, row)).collect();
    let mass = trapezoid(x, &row_mass);
    let density: Vec<Vec<f64>> = raw.iter().map(|row| row.iter().map(|v| v / mass).collect()).collect();

    let integrate = |f: &dyn Fn(f64, f64) -> f64| {
        let rows: Vec<f64> = x
            .iter()
            .zip(&density)
            .map(|(&xv, row)| {
                let vals: Vec<f64> = y.iter().zip(row).map(|(&yv, d)| f(xv, yv) * d).collect();
                trapezoid(y, &vals)
            })
            .collect();
        trapezoid(x, &rows)
    };
    let mx = integrate(&|a, _| a);
    let my = integrate(&|_, b| b);
    let vx = integrate(&|a, _| (a - mx).powi(2));
    let vy = integrate(&|_, b| (b - my).powi(2));
    let cxy = integrate(&|a, b| (a - mx) * (b - my));
    Ok(JointDensity { params, x: x.to_vec(), y: y.to_vec(), density, correlation: cxy / (vx * vy).sqrt() })
}
