//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status if any criterion fails.
//!
//! `LEVSPEC_ACCEPTANCE=1,3,8` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use statrs::distribution::{ContinuousCDF, Normal};

use levspec::inference::{
    ensemble_validate, mle_fit, Likelihood, profile_scan, simulate_estimate, EnsembleConfig, FitOptions, FitWindow,
    NuisanceParams, ObservationModel, Param, ProfileOptions,
};
use levspec::sim::{simulate_trajectory, synthesize_signal, Modulation, OscillatorParams, SignalParams, SimulationConfig};
use levspec::spectral::{bartlett, WindowSpec};
use levspec::stats::ks_test_chi2;
use levspec::theory::{
    middleton_series, narrowband_weights, poisson_truncation, rho_zz, rin_broadened, sigma_zz_tail_mass, DEFAULT_QUAD_ORDER,
    spectrum_from_correlation, FrequencyGrid, ModelParams, TheorySpectrum, TAIL_MASS_LIMIT,
};

const OMEGA: f64 = 2.0 * PI * 100e3;
const GAMMAS: [f64; 4] = [10e3, 20e3, 50e3, 100e3];
const PHIS: [f64; 4] = [0.1, 0.2, 0.5, 1.0];
const F0: f64 = 3e6;
const RATE: f64 = 10e6;
const NOISE_FLOOR: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oscillator(gamma: f64) -> OscillatorParams {
    OscillatorParams { omega: OMEGA, gamma, temperature: 300.0, mass: 1e-18 }
}

fn signal(phi: f64) -> SignalParams {
    SignalParams { carrier_freq: F0, amplitude: 1.0, phase_offset: 0.0, modulation: Modulation::Phi(phi), noise_floor: NOISE_FLOOR }
}

fn sim_config(duration: f64, seed: u64) -> SimulationConfig {
    SimulationConfig { dt: 1e-9, sample_rate: RATE, duration, seed, rin_drift: None }
}

/// Fit band on the positive side of the carrier, used by every simulated fit.
fn fit_window() -> FitWindow {
    FitWindow::new(vec![(1.1e6, 4.9e6)], F0, 5e3)
}

/// Baseband grid resolving Γ and spanning every order above `tol`.
fn oracle_grid(p: &ModelParams, tol: f64) -> FrequencyGrid {
    let order = poisson_truncation(p.phi * p.phi, tol).order as f64;
    let mut half = (order * p.omega + 20.0 * p.gamma) / (2.0 * PI) + 100e3;
    while sigma_zz_tail_mass(p.omega, p.gamma, half) > TAIL_MASS_LIMIT {
        half *= 1.25;
    }
    FrequencyGrid::baseband(p.gamma / (2.0 * PI * 10.0), half).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for &gamma in &GAMMAS {
        for &phi in &PHIS {
            let p = ModelParams::new(phi, OMEGA, gamma);
            let grid = oracle_grid(&p, 1e-20);
            let s = middleton_series(&p, 1.0, &grid, 1e-20).unwrap();
            let c = spectrum_from_correlation(&p, 1.0, &grid).unwrap();
            let err = s.density.iter().zip(&c.density).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
            if err > worst.0 || err.is_nan() {
                worst = (err, gamma, phi);
            }
        }
    }
    outcome(
        worst.0 < 1e-6,
        format!("max relative deviation {:.2e} (worst cell Γ = {:.0}, Φ = {}), limit 1e-6", worst.0, worst.1, worst.2),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: (f64, &str, f64, f64) = (0.0, "", 0.0, 0.0);
    for &gamma in &GAMMAS {
        for &phi in &PHIS {
            let p = ModelParams::new(phi, OMEGA, gamma);
            let grid = oracle_grid(&p, 1e-8);
            let s = middleton_series(&p, 1.0, &grid, 1e-8).unwrap();
            let c = spectrum_from_correlation(&p, 1.0, &grid).unwrap();
            for (name, spec) in [("series", &s), ("correlation", &c)] {
                let dev = (spec.total_mass() - 1.0).abs();
                if dev > worst.0 || dev.is_nan() {
                    worst = (dev, name, gamma, phi);
                }
            }
        }
    }
    outcome(
        worst.0 < 1e-4,
        format!("max |mass - 1| {:.2e} ({} route, Γ = {:.0}, Φ = {}), limit 1e-4", worst.0, worst.1, worst.2, worst.3),
    )
}

/// Integrated mass of harmonic `n` (both sidebands), bounded at the midpoints
/// between neighbouring harmonics.
fn harmonic_mass(s: &TheorySpectrum, n: usize, spacing: f64) -> f64 {
    let mut mass = if n == 0 { s.carrier_weight } else { 0.0 };
    for (i, d) in s.density.iter().enumerate() {
        let f = s.grid.offset(i).abs();
        if (f - n as f64 * spacing).abs() < 0.5 * spacing {
            mass += d * s.grid.df;
        }
    }
    mass
}

fn criterion_3() -> Outcome {
    let gamma = OMEGA / 1000.0;
    let spacing = OMEGA / (2.0 * PI);
    let mut pass = true;
    let mut parts = Vec::new();
    for phi in [0.75, 1.0] {
        let p = ModelParams::new(phi, OMEGA, gamma);
        let grid = oracle_grid(&p, 1e-10);
        let s = middleton_series(&p, 1.0, &grid, 1e-10).unwrap();
        let errs: Vec<f64> = narrowband_weights(phi, 4)
            .iter()
            .enumerate()
            .map(|(n, wn)| (harmonic_mass(&s, n, spacing) / wn - 1.0).abs())
            .collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        pass &= worst < 0.01;
        let list: Vec<String> = errs.iter().map(|e| format!("{e:.1e}")).collect();
        parts.push(format!("Φ = {phi}: relative errors n = 0..4 [{}]", list.join(", ")));
    }
    outcome(pass, format!("Γ = Ω/1000, limit 1e-2; {}", parts.join("; ")))
}

fn criterion_4() -> Outcome {
    let phi = 0.75;
    let gamma = 20e3;
    let osc = oscillator(gamma);
    let sim = sim_config(1.0, 2024);
    let n = sim.n_samples();
    let z = simulate_trajectory(&osc, &sim).unwrap();
    let realized = sample_variance(z.samples()) / osc.position_variance();
    let v = synthesize_signal(&z, &signal(phi), &sim).unwrap();
    drop(z);
    let est = bartlett(&v, n / 9, &WindowSpec::hann()).unwrap();
    drop(v);
    let model = ObservationModel::for_estimate(&est, F0).unwrap();
    let bins = fit_window().bins(&est.grid).unwrap();
    let ks_at = |phi: f64| {
        // Gain v0²/4 and the two-sided detector floor.
        let nuisance = NuisanceParams { gain: 0.25, offset: NOISE_FLOOR };
        let psd = model.psd(&ModelParams::new(phi, OMEGA, gamma), &nuisance).unwrap();
        // Adjacent Hann-windowed bins are correlated; keep every other one.
        let scaled: Vec<f64> = bins.iter().step_by(2).map(|&i| est.nu as f64 * est.power[i] / psd.power[i]).collect();
        ks_test_chi2(&scaled, est.nu as f64)
    };
    let ks = ks_at(phi);
    // Not part of the verdict: the same test at the modulation depth implied
    // by the trajectory's own mean square.
    let conditional = ks_at(phi * realized.sqrt());
    outcome(
        est.nu == 18 && ks.p_value > 0.01,
        format!(
            "ν = {}, {} bins, KS D = {:.2e}, p = {:.3} (pass if p > 0.01); realized ⟨z²⟩ ratio {:.4}, KS p at the realized Φ {:.3}",
            est.nu, ks.n, ks.statistic, ks.p_value, realized, conditional.p_value
        ),
    )
}

fn sample_variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the sample variance of a stationary Gaussian process
/// with autocorrelation ρ, sampled at `rate`.
fn variance_standard_error(variance: f64, n: usize, rate: f64, omega: f64, gamma: f64) -> f64 {
    let mut sum = 1.0;
    let mut k = 1;
    loop {
        let r = rho_zz(omega, gamma, k as f64 / rate);
        sum += 2.0 * r * r * (1.0 - k as f64 / n as f64);
        if r * r < 1e-14 && k as f64 / rate > 20.0 / gamma || k >= n {
            break;
        }
        k += 1;
    }
    variance * (2.0 * sum / n as f64).sqrt()
}

fn criterion_5() -> Outcome {
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut pass = true;
    for (i, &gamma) in GAMMAS.iter().enumerate() {
        let osc = oscillator(gamma);
        let z = simulate_trajectory(&osc, &sim_config(1.0, 500 + i as u64)).unwrap();
        let x = z.samples();
        let var = sample_variance(x);
        let truth = osc.position_variance();
        let se = variance_standard_error(truth, x.len(), RATE, osc.omega, gamma);
        let z_score = (var - truth) / se;
        pass &= z_score.abs() < 3.0;
        if z_score.abs() >= worst.0.abs() {
            worst = (z_score, gamma);
        }
    }
    outcome(pass, format!("4 cells, worst (⟨z²⟩ - k_BT/MΩ²)/SE = {:+.2} at Γ = {:.0}, limit 3", worst.0, worst.1))
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (phi, gamma, seed) in [(0.2, 20e3, 10_000u64), (0.5, 50e3, 20_000u64)] {
        let config = EnsembleConfig {
            oscillator: oscillator(gamma),
            signal: signal(phi),
            simulation: sim_config(1.0, seed),
            segment_length: 1 << 16,
            window: WindowSpec::hann(),
            fit_window: Some(fit_window()),
            fit: FitOptions::default(),
            profile: Some(ProfileOptions { level: 0.68, n_points: 25, ..Default::default() }),
            n_runs: 40,
        };
        let report = match ensemble_validate(&config) {
            Ok(r) => r,
            Err(e) => {
                pass = false;
                lines.push(format!("Φ = {phi}, Γ = {gamma:.0}: {e}"));
                continue;
            }
        };
        let s = report.summary(Param::Phi);
        let cov = report.coverage.as_ref().expect("profile requested");
        let bias_ok = s.bias.abs() < s.standard_error;
        let ratio_ok = (0.7..=1.4).contains(&cov.sd_ratio);
        let cov_ok = cov.within_band();
        pass &= bias_ok && ratio_ok && cov_ok && report.n_runs - report.n_failed >= 40;
        lines.push(format!(
            "Φ = {phi}, Γ = {gamma:.0}: runs {}/{}, bias {:+.2e} vs SE {:.2e} [{}], SD ratio {:.3} [{}], coverage {}/{} in [{}, {}] [{}]",
            report.n_runs - report.n_failed,
            report.n_runs,
            s.bias,
            s.standard_error,
            ok(bias_ok),
            cov.sd_ratio,
            ok(ratio_ok),
            cov.covered,
            cov.n,
            cov.band.0,
            cov.band.1,
            ok(cov_ok),
        ));
    }
    outcome(pass, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let est = simulate_estimate(&oscillator(20e3), &signal(0.2), &sim_config(0.2, 77), 1 << 16, &WindowSpec::hann()).unwrap();
    let init = ModelParams::new(0.25, OMEGA * 1.05, 25e3);
    let options = FitOptions::default();
    let base = mle_fit(&est, &init, &fit_window(), &options).unwrap();
    let base_lik = Likelihood::new(&est, &fit_window(), None, true).unwrap();
    let (base_nuisance, _) = base_lik.evaluate(&base.model).unwrap();
    let mut pass = base.converged;
    let mut worst_shift: f64 = 0.0;
    let mut worst_profiled: f64 = 0.0;
    let mut worst_fitted: f64 = 0.0;
    for c in [0.1, 10.0] {
        let mut scaled = est.clone();
        scaled.power.iter_mut().for_each(|p| *p *= c);
        let fit = mle_fit(&scaled, &init, &fit_window(), &options).unwrap();
        pass &= fit.converged;
        // Shifts in units of the estimated log-parameter SDs, the optimizer's
        // own coordinates.
        for (param, sd) in &base.log_sd {
            let shift = (param.get(&fit.model) / param.get(&base.model)).ln().abs() / sd;
            worst_shift = worst_shift.max(shift);
        }
        // Gain and offset profiled at identical shape parameters.
        let lik = Likelihood::new(&scaled, &fit_window(), None, true).unwrap();
        let (nuisance, _) = lik.evaluate(&base.model).unwrap();
        worst_profiled = worst_profiled
            .max((nuisance.gain / (c * base_nuisance.gain) - 1.0).abs())
            .max((nuisance.offset - c * base_nuisance.offset).abs() / (c * base_nuisance.offset));
        worst_fitted = worst_fitted.max((fit.nuisance.gain / (c * base.nuisance.gain) - 1.0).abs());
    }
    pass &= worst_shift < options.tol && worst_profiled < 1e-9;
    outcome(
        pass,
        format!(
            "c ∈ {{0.1, 10}}: max MLE shift {:.2e} SD (tol {:.0e}); profiled (A, B) at fixed shape scale by c to {:.1e} (limit 1e-9); fitted A ratio within {:.1e}",
            worst_shift, options.tol, worst_profiled, worst_fitted
        ),
    )
}

fn fwhm_near(s: &TheorySpectrum, f_peak: f64, search: f64) -> f64 {
    let idx: Vec<usize> = (0..s.density.len()).filter(|&i| (s.grid.offset(i) - f_peak).abs() < search).collect();
    let top = *idx.iter().max_by(|&&a, &&b| s.density[a].total_cmp(&s.density[b])).unwrap();
    let half = 0.5 * s.density[top];
    let crossing = |step: isize| {
        let mut i = top as isize;
        while s.density[(i + step) as usize] > half {
            i += step;
        }
        let (a, b) = (s.density[i as usize], s.density[(i + step) as usize]);
        s.grid.offset(i as usize) + step as f64 * s.grid.df * (a - half) / (a - b)
    };
    crossing(1) - crossing(-1)
}

fn criterion_8() -> Outcome {
    let p = ModelParams::new(0.35, 2.0 * PI * 69.8e3, 2.5e3);
    let width = 0.01;
    let grid = FrequencyGrid::baseband(p.gamma / (2.0 * PI * 10.0), 450e3).unwrap();
    let eval = |q: &ModelParams| middleton_series(q, 1.0, &grid, 1e-10);
    let base = eval(&p).unwrap();
    let zero = rin_broadened(&p, 0.0, 21, eval).unwrap();
    let identical = zero == base;

    // The line shift per standard deviation of r (Ω R/4π ≈ 350 Hz) exceeds the
    // half-width Γ/4π ≈ 200 Hz, so the integrand in r is sharply peaked and
    // the default order 21 is not converged here.
    let order = 81;
    let quad = rin_broadened(&p, width, order, eval).unwrap();
    let quad_default = rin_broadened(&p, width, DEFAULT_QUAD_ORDER, eval).unwrap();

    // Stratified Monte Carlo: one uniform draw inside each of N equal
    // probability strata of r ~ N(0, R²).
    use rand::{Rng, SeedableRng};
    use rayon::prelude::*;
    let n_draws = 100_000;
    let normal = Normal::new(0.0, width).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let draws: Vec<f64> =
        (0..n_draws).map(|i| normal.inverse_cdf((i as f64 + rng.random::<f64>()) / n_draws as f64)).collect();
    let (mut acc, mut carrier) = draws
        .par_iter()
        .fold(
            || (vec![0.0; grid.n_points], 0.0),
            |(mut acc, carrier), &r| {
                let q = ModelParams::new(p.phi / (1.0 + r).sqrt(), p.omega * (1.0 + r).sqrt(), p.gamma);
                let s = eval(&q).unwrap();
                acc.iter_mut().zip(&s.density).for_each(|(a, d)| *a += (1.0 + r) * d);
                (acc, carrier + (1.0 + r) * s.carrier_weight)
            },
        )
        .reduce(
            || (vec![0.0; grid.n_points], 0.0),
            |(mut a, ca), (b, cb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, ca + cb)
            },
        );
    acc.iter_mut().for_each(|a| *a /= n_draws as f64);
    carrier /= n_draws as f64;
    let deviation = |s: &TheorySpectrum| {
        s.density
            .iter()
            .zip(&acc)
            .map(|(q, m)| ((q - m) / m).abs())
            .fold(((s.carrier_weight - carrier) / carrier).abs(), f64::max)
    };
    let mc_err = deviation(&quad);
    let default_err = deviation(&quad_default);

    let f3 = 3.0 * p.omega / (2.0 * PI);
    let w_base = fwhm_near(&base, f3, 10e3);
    let w_quad = fwhm_near(&quad, f3, 10e3);
    outcome(
        identical && mc_err < 1e-3 && w_quad > w_base,
        format!(
            "R = 0 bit-identical: {identical}; order-{order} quadrature vs {n_draws}-draw MC max relative deviation {mc_err:.2e} (limit 1e-3; order {DEFAULT_QUAD_ORDER} gives {default_err:.2e}); 3rd-harmonic FWHM {:.1} Hz -> {:.1} Hz",
            w_base, w_quad
        ),
    )
}

fn criterion_9() -> Outcome {
    let phi = 0.75;
    let est = simulate_estimate(&oscillator(20e3), &signal(phi), &sim_config(1.0, 909), 1 << 16, &WindowSpec::hann()).unwrap();
    let init = ModelParams::new(0.7, OMEGA, 22e3);
    let fit = mle_fit(&est, &init, &fit_window(), &FitOptions::default()).unwrap();
    if !fit.converged {
        return outcome(false, "fit did not converge".into());
    }
    let profile = profile_scan(&est, &fit, Param::Phi, &ProfileOptions::default()).unwrap();
    let conditional =
        profile_scan(&est, &fit, Param::Phi, &ProfileOptions { fixed: vec![Param::Gamma], ..Default::default() }).unwrap();
    let (wp, wc) = (profile.interval.width(), conditional.interval.width());
    outcome(
        wp >= wc,
        format!("68% widths: profile {wp:.3e}, conditional (Γ = Γ_MLE) {wc:.3e}, ratio {:.3}", wp / wc),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; they are ignored.
    let selected: Option<Vec<usize>> = std::env::var("LEVSPEC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "oracle equivalence", criterion_1),
        (2, "normalization", criterion_2),
        (3, "narrow-band limit", criterion_3),
        (4, "chi-squared residual law", criterion_4),
        (5, "equipartition", criterion_5),
        (6, "ensemble recovery", criterion_6),
        (7, "shape invariance", criterion_7),
        (8, "RIN broadening", criterion_8),
        (9, "profile vs conditional interval", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} ({name}): {verdict} [{:.1} s] {}", start.elapsed().as_secs_f64(), result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
