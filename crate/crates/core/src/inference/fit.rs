//! Maximum-likelihood fit of `(Φ, Ω, Γ)` with profiled gain and offset.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::{ObservationModel, RinSetting};
use super::neldermead;
use super::whittle::{nll_values, profile_values, FitWindow, NuisanceParams};
use crate::spectral::SpectrumEstimate;
use crate::theory::ModelParams;
use crate::{Error, Result};

/// One of the physical model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Phi,
    Omega,
    Gamma,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Phi, Param::Omega, Param::Gamma];

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Param::Phi => p.phi,
            Param::Omega => p.omega,
            Param::Gamma => p.gamma,
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        match self {
            Param::Phi => p.phi = value,
            Param::Omega => p.omega = value,
            Param::Gamma => p.gamma = value,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Phi => "phi",
            Param::Omega => "omega",
            Param::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi" => Ok(Param::Phi),
            "omega" => Ok(Param::Omega),
            "gamma" => Ok(Param::Gamma),
            other => Err(Error::InvalidConfig(format!("unknown parameter '{other}' (expected phi, omega or gamma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// RIN width held fixed during the fit.
    pub rin: Option<RinSetting>,
    /// Simplex size at which a run counts as converged, in estimated standard
    /// deviations of each log-parameter.
    pub tol: f64,
    /// Evaluation budget per simplex run.
    pub max_evals: usize,
    /// Extra runs from perturbed simplices around the best point.
    pub restarts: usize,
    /// Parameters held at their initial values.
    pub fixed: Vec<Param>,
    /// Model the carrier line's window leakage.
    pub include_carrier: bool,
    /// Coordinate-wise grid scans over a factor of [`BASIN_SPAN`] either side
    /// of the start before the simplex runs.
    pub basin_search: bool,
}

/// Largest factor by which the basin search moves a parameter.
pub const BASIN_SPAN: f64 = 4.0;

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { rin: None, tol: 1e-3, max_evals: 3000, restarts: 3, fixed: vec![], include_carrier: true, basin_search: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelParams,
    pub nuisance: NuisanceParams,
    pub nll: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub window: FitWindow,
    pub rin: Option<RinSetting>,
    pub fixed: Vec<Param>,
    pub include_carrier: bool,
    pub n_bins: usize,
    /// Factor turning NLL differences into log-probability differences.
    pub likelihood_scale: f64,
    /// Curvature estimate of each free parameter's standard deviation in
    /// log space, used to scale the simplex.
    pub log_sd: Vec<(Param, f64)>,
}

/// Whittle likelihood of one estimate restricted to a window, as a function
/// of the physical parameters with `(A, B)` profiled out.
#[derive(Debug, Clone)]
pub struct Likelihood {
    model: ObservationModel,
    bins: Vec<usize>,
    data: Vec<f64>,
    scale: f64,
}

impl Likelihood {
    pub fn new(est: &SpectrumEstimate, window: &FitWindow, rin: Option<RinSetting>, include_carrier: bool) -> Result<Self> {
        let bins = window.bins(&est.grid)?;
        let mut model = ObservationModel::for_estimate(est, window.carrier_freq)?.with_rin(rin)?;
        if !include_carrier {
            model = model.without_carrier();
        }
        let data = bins.iter().map(|&i| est.power[i]).collect();
        // Bartlett averaging of ν/2 periodograms multiplies the log-likelihood
        // by ν/2; neighbouring windowed bins are correlated and share
        // information, which the bin-correlation factor removes.
        let scale = est.nu as f64 / (2.0 * est.window.bin_correlation_factor(est.segment_length));
        Ok(Likelihood { model, bins, data, scale })
    }

    /// Profiled nuisance parameters and NLL at `params`.
    pub fn evaluate(&self, params: &ModelParams) -> Result<(NuisanceParams, f64)> {
        self.evaluate_from(params, None)
    }

    /// As [`Likelihood::evaluate`], starting the nuisance search at `hint`.
    pub fn evaluate_from(&self, params: &ModelParams, hint: Option<NuisanceParams>) -> Result<(NuisanceParams, f64)> {
        let full = self.model.density(params)?;
        let density: Vec<f64> = self.bins.iter().map(|&i| full[i]).collect();
        profile_values(&self.data, &density, hint)
    }

    /// NLL, `+∞` where the model cannot be evaluated.
    pub fn nll(&self, params: &ModelParams) -> f64 {
        self.evaluate(params).map(|(_, v)| v).unwrap_or(f64::INFINITY)
    }

    /// NLL with the nuisance parameters held at `nuisance`, `+∞` where the
    /// model cannot be evaluated.
    pub fn nll_at(&self, params: &ModelParams, nuisance: &NuisanceParams) -> f64 {
        let Ok(full) = self.model.density(params) else {
            return f64::INFINITY;
        };
        let density: Vec<f64> = self.bins.iter().map(|&i| full[i]).collect();
        nll_values(&self.data, &density, nuisance.gain, nuisance.offset).unwrap_or(f64::INFINITY)
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Free parameters in a fixed order.
pub(crate) fn free_params(fixed: &[Param]) -> Vec<Param> {
    Param::ALL.iter().copied().filter(|p| !fixed.contains(p)).collect()
}

pub(crate) struct SubFit {
    pub params: ModelParams,
    pub nll: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Minimizer over a subset of parameters in scaled log coordinates
/// `u_i = (ln p_i - ln start_i) / scale_i`.
pub(crate) struct SubProblem<'a> {
    pub lik: &'a Likelihood,
    pub start: ModelParams,
    pub free: Vec<Param>,
    pub scales: Vec<f64>,
}

impl SubProblem<'_> {
    fn params_at(&self, u: &[f64]) -> ModelParams {
        let mut p = self.start;
        for ((param, ui), s) in self.free.iter().zip(u).zip(&self.scales) {
            param.set(&mut p, (param.get(&self.start).ln() + ui * s).exp());
        }
        p
    }

    /// Nelder–Mead from the start point with unit simplex steps, followed by
    /// `restarts` runs from perturbed simplices around the best point.
    pub fn minimize(&self, tol: f64, max_evals: usize, restarts: usize) -> SubFit {
        let hint = Cell::new(None);
        let objective = |u: &[f64]| match self.lik.evaluate_from(&self.params_at(u), hint.get()) {
            Ok((nuisance, v)) => {
                hint.set(Some(nuisance));
                v
            }
            Err(_) => f64::INFINITY,
        };
        let n = self.free.len();
        let mut best = neldermead::minimize(objective, &vec![0.0; n], &vec![1.0; n], tol, max_evals);
        let mut total = best.n_evals;
        let mut converged = best.converged;
        for r in 1..=restarts {
            // Deterministic perturbation, alternating in sign and shrinking.
            let size = 1.0 / r as f64;
            let sign = |i: usize| if (i + r) % 2 == 0 { 1.0 } else { -1.0 };
            let x: Vec<f64> = best.x.iter().enumerate().map(|(i, v)| v + 0.5 * size * sign(i)).collect();
            let steps: Vec<f64> = (0..n).map(|i| -size * sign(i)).collect();
            let run = neldermead::minimize(objective, &x, &steps, tol, max_evals);
            total += run.n_evals;
            if run.value <= best.value {
                converged = run.converged;
                best = run;
            }
        }
        SubFit { params: self.params_at(&best.x), nll: best.value, n_evals: total, converged }
    }
}

/// Standard deviation of each free log-parameter from the diagonal
/// curvature of the NLL at `at`; `fallback` where the curvature is unusable.
pub(crate) fn log_sd_estimates(lik: &Likelihood, at: &ModelParams, free: &[Param], fallback: f64) -> (Vec<f64>, usize) {
    let centre = lik.nll(at);
    let mut evals = 1;
    let sds = free
        .iter()
        .map(|&param| {
            let mut h = 1e-3;
            let mut sd = fallback;
            // Second pass re-spaces the difference at the first estimate.
            for _ in 0..2 {
                let at_log = |delta: f64| {
                    let mut p = *at;
                    param.set(&mut p, (param.get(at).ln() + delta).exp());
                    lik.nll(&p)
                };
                let c = (at_log(h) - 2.0 * centre + at_log(-h)) / (h * h);
                evals += 2;
                if !(c > 0.0 && c.is_finite()) {
                    break;
                }
                sd = 1.0 / (c * lik.scale()).sqrt();
                h = sd.clamp(1e-7, 0.1);
            }
            sd.clamp(1e-7, 1.0)
        })
        .collect();
    (sds, evals)
}

/// Two sweeps of 1-D log-grid scans, Ω first: a start with the wrong
/// harmonic spacing otherwise settles in the Φ → 0 basin where the floor
/// explains the data.
fn basin_search(lik: &Likelihood, start: &ModelParams, free: &[Param]) -> (ModelParams, f64, usize) {
    let mut best = *start;
    let mut best_nll = lik.nll(start);
    let mut evals = 1;
    let order: Vec<Param> = [Param::Omega, Param::Phi, Param::Gamma].into_iter().filter(|p| free.contains(p)).collect();
    for _ in 0..2 {
        for &param in &order {
            let n = if param == Param::Omega { 97 } else { 49 };
            let centre = param.get(&best).ln();
            let span = BASIN_SPAN.ln();
            let mut line_best = (best, best_nll);
            for i in 0..n {
                let mut p = best;
                param.set(&mut p, (centre - span + 2.0 * span * i as f64 / (n - 1) as f64).exp());
                let v = lik.nll(&p);
                evals += 1;
                if v < line_best.1 {
                    line_best = (p, v);
                }
            }
            (best, best_nll) = line_best;
        }
    }
    (best, best_nll, evals)
}

/// Minimizes the profiled Whittle NLL over the free parameters with
/// Nelder–Mead in log-parameter space.
///
/// An optional basin search moves the start along each parameter; a coarse run with uniform 10% steps locates the basin; the curvature
/// there rescales each coordinate by its estimated standard deviation for the
/// final run and restarts. Non-convergence is reported through
/// [`FitResult::converged`]; it is not an error.
pub fn mle_fit(est: &SpectrumEstimate, init: &ModelParams, window: &FitWindow, options: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    if init.phi <= 0.0 {
        return Err(Error::InvalidConfig("initial phi must be > 0".into()));
    }
    if !(options.tol > 0.0) || options.max_evals == 0 {
        return Err(Error::InvalidConfig("fit tolerance and evaluation budget must be positive".into()));
    }
    let lik = Likelihood::new(est, window, options.rin, options.include_carrier)?;
    if let Err(e @ Error::Degenerate(_)) = lik.evaluate(init) {
        return Err(e);
    }
    let free = free_params(&options.fixed);
    let (start, _, basin_evals) = if options.basin_search { basin_search(&lik, init, &free) } else { (*init, 0.0, 0) };
    let coarse = SubProblem { lik: &lik, start, free: free.clone(), scales: vec![0.1; free.len()] }
        .minimize(1e-3, options.max_evals, 0);
    if !coarse.nll.is_finite() {
        return Err(Error::Degenerate("likelihood is not finite anywhere the fit visited".into()));
    }
    let (scales, curvature_evals) = log_sd_estimates(&lik, &coarse.params, &free, 1e-2);
    let fine = SubProblem { lik: &lik, start: coarse.params, free: free.clone(), scales: scales.clone() }
        .minimize(options.tol, options.max_evals, options.restarts);
    let best = if fine.nll <= coarse.nll { &fine } else { &coarse };
    let (nuisance, nll) = lik.evaluate(&best.params)?;
    Ok(FitResult {
        model: best.params,
        nuisance,
        nll,
        converged: fine.converged,
        n_evals: basin_evals + coarse.n_evals + curvature_evals + fine.n_evals,
        window: window.clone(),
        rin: options.rin,
        fixed: options.fixed.clone(),
        include_carrier: options.include_carrier,
        n_bins: lik.bins().len(),
        likelihood_scale: lik.scale(),
        log_sd: free.into_iter().zip(scales).collect(),
    })
}
