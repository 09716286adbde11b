use std::f64::consts::PI;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use levspec::inference::{
    ensemble_validate, mle_fit, profile_scan, EnsembleConfig, FitOptions, FitResult, FitWindow, Likelihood,
    NuisanceParams, Param, ProfileOptions, ProfileScan, RinSetting,
};
use levspec::io::{read_json, read_time_series, write_json, write_time_series, write_tsv, SpectrumFile, TheoryFile};
use levspec::sim::{
    simulate_trajectory, synthesize_signal, DriftModel, Modulation, OscillatorParams, RinDrift, SignalParams,
    SimulationConfig,
};
use levspec::spectral::{bartlett, residuals_in, Detrend, SpectrumEstimate, WindowKind, WindowSpec};
use levspec::stats::ks_test_chi2;
use levspec::theory::{
    middleton_series, poisson_truncation, rin_broadened, spectrum_from_correlation, FrequencyGrid, ModelParams,
    SPAN_TOL,
};
use levspec::Error;

use crate::args::{
    parse_band, parse_grid, DetrendArg, DriftArg, EnsembleArgs, FitArgs, MethodArg, ProfileArgs, PsdArgs,
    SimulateArgs, TheoryArgs, WindowArg,
};

/// Fit finished without converging; the result file is still written.
#[derive(Debug)]
pub struct NotConverged;

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("optimizer did not converge; see diagnostics in the output file")
    }
}

impl std::error::Error for NotConverged {}

fn effective<T: Serialize>(command: &str, args: &T) -> Value {
    json!({ "command": command, "args": args, "version": env!("CARGO_PKG_VERSION") })
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let oscillator = OscillatorParams {
        omega: args.oscillator.omega(),
        gamma: args.oscillator.gamma,
        temperature: args.temperature,
        mass: args.mass,
    };
    let modulation = match (args.phi, args.kappa) {
        (Some(phi), _) => Modulation::Phi(phi),
        (None, Some(kappa)) => Modulation::Kappa(kappa),
        (None, None) => unreachable!("clap requires --phi or --kappa"),
    };
    let signal = SignalParams {
        carrier_freq: args.f0,
        amplitude: args.amplitude,
        phase_offset: args.phase_offset,
        modulation,
        noise_floor: args.noise_floor,
    };
    let config = SimulationConfig {
        dt: args.dt,
        sample_rate: args.rate,
        duration: args.duration,
        seed: args.seed,
        rin_drift: args.rin_width.map(|width| RinDrift {
            width,
            model: match args.rin_model {
                DriftArg::ConstantPerRun => DriftModel::ConstantPerRun,
                DriftArg::LinearRamp => DriftModel::LinearRamp,
            },
        }),
    };
    // Validate everything before the long integration.
    oscillator.validate()?;
    signal.validate()?;
    config.validate()?;
    let cfg = effective("simulate", args);
    let z = simulate_trajectory(&oscillator, &config)?;
    let v = synthesize_signal(&z, &signal, &config)?;
    if let Some(p) = &args.position_output {
        write_time_series(p, &z, &cfg)?;
    }
    drop(z);
    write_time_series(&args.output, &v, &cfg)?;
    log::info(format!("wrote {} samples to {}", v.len(), args.output.display()));
    Ok(())
}

pub fn psd(args: &PsdArgs) -> Result<()> {
    let (series, _) = read_time_series(&args.input, args.sample_rate)?;
    let segment = match (args.segment, args.segments) {
        (Some(m), _) => m,
        (None, Some(k)) => {
            if k == 0 {
                return Err(Error::InvalidConfig("--segments must be >= 1".into()).into());
            }
            series.len() / k
        }
        (None, None) => series.len(),
    };
    let window = WindowSpec {
        kind: match args.window {
            WindowArg::Hann => WindowKind::Hann,
            WindowArg::Rectangular => WindowKind::Rectangular,
        },
        detrend: match args.detrend {
            DetrendArg::Mean => Detrend::Mean,
            DetrendArg::None => Detrend::None,
        },
    };
    let mut est = bartlett(&series, segment, &window)?;
    if args.one_sided {
        est = est.to_one_sided();
    }
    if let Some(t) = &args.tsv {
        write_tsv(t, &["freq_hz", "power"], &[&est.freqs(), &est.power])?;
    }
    let mut cfg = effective("psd", args);
    cfg["input_seed"] = json!(series.meta.seed);
    log::info(format!("nu = {}, {} segments of {}", est.nu, est.n_segments, est.segment_length));
    write_json(&args.output, &SpectrumFile { spectrum: est, config: cfg })?;
    Ok(())
}

pub fn theory(args: &TheoryArgs) -> Result<()> {
    let params = ModelParams::new(args.phi, args.oscillator.omega(), args.oscillator.gamma);
    params.validate()?;
    let df = args.df.unwrap_or(params.gamma / (2.0 * PI * 20.0));
    let half_width = match args.half_width {
        Some(h) => h,
        None => {
            // Room for the retained orders (and their RIN-shifted copies) plus
            // the Lorentzian tails.
            let order = poisson_truncation(args.phi * args.phi, args.tol.max(SPAN_TOL)).order.max(1) as f64;
            let stretch = 1.0 + 4.0 * args.rin_width;
            (order * params.omega * stretch + 10.0 * params.gamma) / (2.0 * PI) * 1.5 + 200.0 * params.gamma / (2.0 * PI)
        }
    };
    let grid = FrequencyGrid::baseband(df, half_width)?;
    let eval = |p: &ModelParams| match args.method {
        MethodArg::Series => middleton_series(p, args.amplitude, &grid, args.tol),
        MethodArg::Correlation => spectrum_from_correlation(p, args.amplitude, &grid),
    };
    let spectrum = rin_broadened(&params, args.rin_width, args.rin_order, eval)?;
    let file = TheoryFile::new(&spectrum, args.f0, effective("theory", args));
    if let Some(t) = &args.tsv {
        write_tsv(t, &["freq_hz", "density"], &[&file.freqs(), &file.density])?;
    }
    write_json(&args.output, &file)?;
    Ok(())
}

fn fit_window(args: &FitArgs, est: &SpectrumEstimate) -> Result<FitWindow> {
    if !(args.exclude_carrier >= 0.0) {
        return Err(Error::InvalidConfig("--exclude-carrier must be >= 0".into()).into());
    }
    let exclusion = args.exclude_carrier * est.grid.df;
    if args.windows.is_empty() {
        let mut w = FitWindow::positive_side(&est.grid, est.sample_rate, args.f0);
        w.carrier_exclusion = exclusion;
        return Ok(w);
    }
    let intervals =
        args.windows.iter().map(|s| parse_band(s).map_err(|e| Error::InvalidConfig(e.to_string()))).collect::<Result<_, _>>()?;
    Ok(FitWindow::new(intervals, args.f0, exclusion))
}

fn parse_params(names: &[String]) -> Result<Vec<Param>> {
    Ok(names.iter().map(|s| s.parse::<Param>()).collect::<Result<_, _>>()?)
}

fn fit_options(args: &FitArgs) -> Result<FitOptions> {
    Ok(FitOptions {
        rin: args.rin_width.map(|width| RinSetting { width, order: args.rin_order }),
        tol: args.tol,
        max_evals: args.max_evals,
        restarts: args.restarts,
        fixed: parse_params(&args.fix)?,
        include_carrier: !args.no_carrier_model,
        basin_search: !args.no_basin_search,
    })
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    converged: bool,
    n_evals: usize,
    n_bins: usize,
    likelihood_scale: f64,
    log_sd: Vec<(Param, f64)>,
    /// Mean of Ŝ/S over the window.
    mean_ratio: f64,
    /// KS test of νŜ/S against χ²_ν on every other window bin.
    ks_statistic: f64,
    ks_p_value: f64,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FitOutput {
    params: ModelParams,
    nuisance: NuisanceParams,
    nll: f64,
    window: FitWindow,
    rin: Option<RinSetting>,
    fixed: Vec<Param>,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<ProfileScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional: Option<Vec<Param>>,
    diagnostics: Diagnostics,
    config: Value,
}

fn diagnostics(est: &SpectrumEstimate, fit: &FitResult, warnings: Vec<String>, tsv: Option<&Path>) -> Result<Diagnostics> {
    let lik = Likelihood::new(est, &fit.window, fit.rin, fit.include_carrier)?;
    let model = lik.model().psd(&fit.model, &fit.nuisance)?;
    let bins = lik.bins();
    let res = residuals_in(est, &model, bins)?;
    let mean_ratio = res.ratio.iter().sum::<f64>() / res.ratio.len() as f64;
    // Adjacent windowed bins are correlated; thin before testing.
    let thinned: Vec<f64> = res.ratio.iter().step_by(2).map(|r| r * est.nu as f64).collect();
    let ks = ks_test_chi2(&thinned, est.nu as f64);
    if let Some(path) = tsv {
        let f: Vec<f64> = bins.iter().map(|&i| est.grid.freq(i)).collect();
        let data: Vec<f64> = bins.iter().map(|&i| est.power[i]).collect();
        let m: Vec<f64> = bins.iter().map(|&i| model.power[i]).collect();
        write_tsv(path, &["freq_hz", "data", "model", "ratio"], &[&f, &data, &m, &res.ratio])?;
    }
    Ok(Diagnostics {
        converged: fit.converged,
        n_evals: fit.n_evals,
        n_bins: fit.n_bins,
        likelihood_scale: fit.likelihood_scale,
        log_sd: fit.log_sd.clone(),
        mean_ratio,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        warnings,
    })
}

fn load_spectrum(path: &Path) -> Result<SpectrumFile> {
    let file: SpectrumFile = read_json(path)?;
    let est = &file.spectrum;
    if est.power.len() != est.grid.n || est.segment_length < 2 || est.nu < 2 {
        return Err(Error::MalformedInput { path: path.display().to_string(), reason: "inconsistent spectrum header".into() }.into());
    }
    Ok(file)
}

fn run_fit(args: &FitArgs) -> Result<(SpectrumFile, FitResult)> {
    let file = load_spectrum(&args.spectrum)?;
    let est = &file.spectrum;
    let window = fit_window(args, est)?;
    let init = ModelParams::new(args.phi, args.oscillator.omega(), args.oscillator.gamma);
    let fit = mle_fit(est, &init, &window, &fit_options(args)?)?;
    Ok((file, fit))
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let (file, fit) = run_fit(args)?;
    let diagnostics = diagnostics(&file.spectrum, &fit, vec![], args.tsv.as_deref())?;
    let mut cfg = effective("fit", args);
    cfg["spectrum_config"] = file.config.clone();
    let out = FitOutput {
        params: fit.model,
        nuisance: fit.nuisance,
        nll: fit.nll,
        window: fit.window.clone(),
        rin: fit.rin,
        fixed: fit.fixed.clone(),
        profile: None,
        conditional: None,
        diagnostics,
        config: cfg,
    };
    write_json(&args.output, &out)?;
    if !fit.converged {
        return Err(NotConverged.into());
    }
    Ok(())
}

pub fn profile(args: &ProfileArgs) -> Result<()> {
    let param: Param = args.param.parse()?;
    let hold = parse_params(&args.hold)?;
    let grid = args.grid.as_deref().map(parse_grid).transpose().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let options = ProfileOptions { level: args.level, n_points: args.points, grid, fixed: hold.clone(), ..Default::default() };
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidConfig(format!("--level must lie in (0, 1), got {}", options.level)).into());
    }
    let (file, fit) = run_fit(&args.fit)?;
    let mut cfg = effective("profile", args);
    cfg["spectrum_config"] = file.config.clone();
    let scan = if fit.converged { Some(profile_scan(&file.spectrum, &fit, param, &options)?) } else { None };
    let warnings = scan.as_ref().map(|s| s.warnings.clone()).unwrap_or_default();
    if let (Some(path), Some(s)) = (&args.scan_tsv, &scan) {
        write_tsv(path, &[param.name(), "nll", "density"], &[&s.grid, &s.nll, &s.density])?;
    }
    let diagnostics = diagnostics(&file.spectrum, &fit, warnings, args.fit.tsv.as_deref())?;
    let out = FitOutput {
        params: fit.model,
        nuisance: fit.nuisance,
        nll: fit.nll,
        window: fit.window.clone(),
        rin: fit.rin,
        fixed: fit.fixed.clone(),
        profile: scan,
        conditional: (!hold.is_empty()).then_some(hold),
        diagnostics,
        config: cfg,
    };
    write_json(&args.fit.output, &out)?;
    if !fit.converged || out.profile.as_ref().is_some_and(|s| !s.converged) {
        return Err(NotConverged.into());
    }
    Ok(())
}

pub fn ensemble(args: &EnsembleArgs) -> Result<()> {
    let oscillator = OscillatorParams {
        omega: args.oscillator.omega(),
        gamma: args.oscillator.gamma,
        temperature: args.temperature,
        mass: args.mass,
    };
    let signal = SignalParams {
        carrier_freq: args.f0,
        amplitude: 1.0,
        phase_offset: 0.0,
        modulation: Modulation::Phi(args.phi),
        noise_floor: args.noise_floor,
    };
    let simulation =
        SimulationConfig { dt: args.dt, sample_rate: args.rate, duration: args.duration, seed: args.seed, rin_drift: None };
    let df = args.rate / args.segment as f64;
    let fit_window = if args.windows.is_empty() {
        let grid = levspec::spectral::centered_grid(args.segment, args.rate);
        let mut w = FitWindow::positive_side(&grid, args.rate, args.f0);
        w.carrier_exclusion = args.exclude_carrier * df;
        w
    } else {
        let intervals = args
            .windows
            .iter()
            .map(|s| parse_band(s).map_err(|e| Error::InvalidConfig(e.to_string())))
            .collect::<Result<_, _>>()?;
        FitWindow::new(intervals, args.f0, args.exclude_carrier * df)
    };
    let config = EnsembleConfig {
        oscillator,
        signal,
        simulation,
        segment_length: args.segment,
        window: WindowSpec::hann(),
        fit_window: Some(fit_window),
        fit: FitOptions::default(),
        profile: args
            .profile
            .then(|| ProfileOptions { level: args.level, n_points: args.points, ..Default::default() }),
        n_runs: args.runs,
    };
    let report = ensemble_validate(&config)?;
    let out = json!({ "report": report, "config": effective("ensemble", args) });
    write_json(&args.output, &out).context("writing ensemble report")?;
    Ok(())
}

/// Minimal stderr logging controlled by `-v`.
pub mod log {
    use std::sync::atomic::{AtomicU8, Ordering};

    static LEVEL: AtomicU8 = AtomicU8::new(0);

    pub fn set_level(level: u8) {
        LEVEL.store(level, Ordering::Relaxed);
    }

    pub fn info(msg: impl AsRef<str>) {
        if LEVEL.load(Ordering::Relaxed) > 0 {
            eprintln!("levspec: {}", msg.as_ref());
        }
    }
}
