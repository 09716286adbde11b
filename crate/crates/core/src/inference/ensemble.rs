//! Coverage and calibration checks on ensembles of simulated runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::fit::{mle_fit, FitOptions, FitResult, Param};
use super::profile::{profile_scan, Interval, ProfileOptions};
use super::whittle::FitWindow;
use crate::sim::{simulate_trajectory, synthesize_signal, Modulation, OscillatorParams, SignalParams, SimulationConfig};
use crate::spectral::{bartlett, SpectrumEstimate, WindowSpec};
use crate::theory::ModelParams;
use crate::{Error, Result};

/// Largest tolerated fraction of failed runs.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub oscillator: OscillatorParams,
    pub signal: SignalParams,
    /// Run `i` uses seed `simulation.seed + i`.
    pub simulation: SimulationConfig,
    pub segment_length: usize,
    #[serde(default)]
    pub window: WindowSpec,
    /// Defaults to the positive side with the default carrier exclusion.
    #[serde(default)]
    pub fit_window: Option<FitWindow>,
    #[serde(default)]
    pub fit: FitOptions,
    /// Profile scan of Φ per run, for interval coverage and width calibration.
    #[serde(default)]
    pub profile: Option<ProfileOptions>,
    pub n_runs: usize,
}

/// Simulated trajectory, heterodyne signal and Bartlett estimate in one call.
pub fn simulate_estimate(
    oscillator: &OscillatorParams,
    signal: &SignalParams,
    simulation: &SimulationConfig,
    segment_length: usize,
    window: &WindowSpec,
) -> Result<SpectrumEstimate> {
    let z = simulate_trajectory(oscillator, simulation)?;
    let v = synthesize_signal(&z, signal, simulation)?;
    drop(z);
    bartlett(&v, segment_length, window)
}

/// Model parameters the simulation corresponds to.
pub fn true_params(oscillator: &OscillatorParams, signal: &SignalParams) -> ModelParams {
    let phi = match signal.modulation {
        Modulation::Phi(p) => p,
        Modulation::Kappa(k) => k.abs() * oscillator.position_variance().sqrt(),
    };
    ModelParams::new(phi, oscillator.omega, oscillator.gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProfile {
    pub mean: f64,
    pub sd: f64,
    pub interval: Interval,
    pub covers_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub seed: u64,
    pub fit: Option<FitResult>,
    pub profile: Option<RunProfile>,
    pub error: Option<String>,
}

impl EnsembleRun {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.fit.as_ref().is_some_and(|f| f.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub param: Param,
    pub truth: f64,
    pub mean: f64,
    /// Sample standard deviation of the per-run estimates.
    pub sd: f64,
    pub bias: f64,
    /// `sd / √n`.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub level: f64,
    pub covered: usize,
    pub n: usize,
    /// Central 95% binomial range of `covered` for a calibrated interval.
    pub band: (usize, usize),
    pub mean_profile_sd: f64,
    /// Ensemble SD of Φ over mean profile SD.
    pub sd_ratio: f64,
}

impl CoverageSummary {
    pub fn within_band(&self) -> bool {
        self.covered >= self.band.0 && self.covered <= self.band.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub truth: ModelParams,
    pub n_runs: usize,
    pub n_failed: usize,
    pub params: Vec<ParamSummary>,
    pub coverage: Option<CoverageSummary>,
    pub runs: Vec<EnsembleRun>,
}

impl EnsembleReport {
    pub fn summary(&self, param: Param) -> &ParamSummary {
        self.params.iter().find(|s| s.param == param).expect("all parameters summarized")
    }
}

/// Central `(1 - alpha)` range of a Binomial(n, p) count.
pub fn binomial_band(n: usize, p: f64, alpha: f64) -> (usize, usize) {
    let dist = Binomial::new(p, n as u64).expect("valid binomial");
    let lo = (0..=n).find(|&k| dist.cdf(k as u64) > 0.5 * alpha).unwrap_or(0);
    let hi = (0..=n).find(|&k| dist.cdf(k as u64) >= 1.0 - 0.5 * alpha).unwrap_or(n);
    (lo, hi)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn run_one(config: &EnsembleConfig, truth: &ModelParams, index: usize) -> EnsembleRun {
    let seed = config.simulation.seed.wrapping_add(index as u64);
    let sim = SimulationConfig { seed, ..config.simulation };
    let outcome = (|| -> Result<(FitResult, Option<RunProfile>)> {
        let est = simulate_estimate(&config.oscillator, &config.signal, &sim, config.segment_length, &config.window)?;
        let window = match &config.fit_window {
            Some(w) => w.clone(),
            None => FitWindow::positive_side(&est.grid, est.sample_rate, config.signal.carrier_freq),
        };
        let fit = mle_fit(&est, truth, &window, &config.fit)?;
        let profile = match (&config.profile, fit.converged) {
            (Some(opts), true) => {
                let scan = profile_scan(&est, &fit, Param::Phi, opts)?;
                Some(RunProfile {
                    mean: scan.mean,
                    sd: scan.sd,
                    interval: scan.interval,
                    covers_truth: scan.interval.contains(truth.phi),
                })
            }
            _ => None,
        };
        Ok((fit, profile))
    })();
    match outcome {
        Ok((fit, profile)) => EnsembleRun { seed, fit: Some(fit), profile, error: None },
        Err(e) => EnsembleRun { seed, fit: None, profile: None, error: Some(e.to_string()) },
    }
}

/// Simulates and fits `n_runs` independent realizations and summarizes the
/// estimator's bias, spread and interval calibration.
pub fn ensemble_validate(config: &EnsembleConfig) -> Result<EnsembleReport> {
    if config.n_runs < 10 {
        return Err(Error::InvalidConfig(format!("an ensemble needs at least 10 runs, got {}", config.n_runs)));
    }
    config.oscillator.validate()?;
    config.signal.validate()?;
    config.simulation.validate()?;
    let truth = true_params(&config.oscillator, &config.signal);
    let runs: Vec<EnsembleRun> = (0..config.n_runs).into_par_iter().map(|i| run_one(config, &truth, i)).collect();
    let ok: Vec<&EnsembleRun> = runs.iter().filter(|r| r.succeeded()).collect();
    let n_failed = runs.len() - ok.len();
    if n_failed as f64 > MAX_FAILED_FRACTION * runs.len() as f64 {
        return Err(Error::EnsembleNonConvergence { failed: n_failed, total: runs.len() });
    }
    let params = Param::ALL
        .iter()
        .map(|&param| {
            let est: Vec<f64> = ok.iter().map(|r| param.get(&r.fit.as_ref().unwrap().model)).collect();
            let (mean, sd) = mean_sd(&est);
            let t = param.get(&truth);
            ParamSummary { param, truth: t, mean, sd, bias: mean - t, standard_error: sd / (est.len() as f64).sqrt() }
        })
        .collect::<Vec<_>>();
    let coverage = config.profile.as_ref().and_then(|opts| {
        let profiles: Vec<&RunProfile> = ok.iter().filter_map(|r| r.profile.as_ref()).collect();
        if profiles.is_empty() {
            return None;
        }
        let n = profiles.len();
        let covered = profiles.iter().filter(|p| p.covers_truth).count();
        let mean_profile_sd = profiles.iter().map(|p| p.sd).sum::<f64>() / n as f64;
        let phi_sd = params[0].sd;
        Some(CoverageSummary {
            level: opts.level,
            covered,
            n,
            band: binomial_band(n, opts.level, 0.05),
            mean_profile_sd,
            sd_ratio: phi_sd / mean_profile_sd,
        })
    });
    Ok(EnsembleReport { truth, n_runs: runs.len(), n_failed, params, coverage, runs })
}
