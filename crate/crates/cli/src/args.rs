use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "levspec", version, about = "Simulate, estimate and fit heterodyne spectra of a levitated oscillator")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LEVSPEC_THREADS")]
    pub threads: Option<usize>,

    /// Diagnostic output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Simulate a trajectory and its heterodyne signal.
    Simulate(SimulateArgs),
    /// Bartlett spectrum estimate of a time series.
    Psd(PsdArgs),
    /// Theoretical heterodyne spectrum.
    Theory(TheoryArgs),
    /// Maximum-likelihood fit of a spectrum estimate.
    Fit(FitArgs),
    /// Fit followed by a profile-likelihood scan of one parameter.
    Profile(ProfileArgs),
    /// Simulate and fit an ensemble of runs.
    Ensemble(EnsembleArgs),
}

/// Options that are read from `--config` but never echoed as flags.
#[derive(Debug, Args, Serialize)]
pub struct ConfigArg {
    /// JSON file whose keys mirror the long flags of this subcommand.
    /// Command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OscillatorArgs {
    /// Natural angular frequency Ω, rad/s.
    #[arg(long, required_unless_present = "freq", conflicts_with = "freq")]
    pub omega: Option<f64>,
    /// Natural frequency Ω/2π, Hz (alternative to --omega).
    #[arg(long)]
    pub freq: Option<f64>,
    /// Damping rate Γ, 1/s.
    #[arg(long)]
    pub gamma: f64,
}

impl OscillatorArgs {
    pub fn omega(&self) -> f64 {
        match (self.omega, self.freq) {
            (Some(w), _) => w,
            (None, Some(f)) => 2.0 * std::f64::consts::PI * f,
            (None, None) => unreachable!("clap requires one of --omega/--freq"),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftArg {
    ConstantPerRun,
    LinearRamp,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[command(flatten)]
    pub oscillator: OscillatorArgs,
    /// RMS phase depth Φ (κ is derived from equipartition).
    #[arg(long, conflicts_with = "kappa", required_unless_present = "kappa")]
    pub phi: Option<f64>,
    /// Position-to-phase sensitivity κ, rad/m.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Carrier frequency, Hz.
    #[arg(long)]
    pub f0: f64,
    /// Output sample rate, S/s.
    #[arg(long)]
    pub rate: f64,
    /// Duration, s.
    #[arg(long)]
    pub duration: f64,
    /// Integration step, s.
    #[arg(long, default_value_t = 1e-9)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Temperature, K.
    #[arg(long, default_value_t = 300.0)]
    pub temperature: f64,
    /// Particle mass, kg.
    #[arg(long, default_value_t = 1e-18)]
    pub mass: f64,
    /// Carrier amplitude v0.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Carrier phase θ0, rad.
    #[arg(long, default_value_t = 0.0)]
    pub phase_offset: f64,
    /// Two-sided detector-noise PSD, units²/Hz.
    #[arg(long, default_value_t = 0.0)]
    pub noise_floor: f64,
    /// Relative intensity drift width R.
    #[arg(long)]
    pub rin_width: Option<f64>,
    #[arg(long, value_enum, default_value = "constant-per-run")]
    pub rin_model: DriftArg,
    /// Signal output (raw f64, with a .json sidecar).
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the position trajectory here.
    #[arg(long)]
    pub position_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetrendArg {
    Mean,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct PsdArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    /// Time-series file (raw f64 little-endian).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Sample rate, needed only without a sidecar.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Segment length M.
    #[arg(long, conflicts_with = "segments")]
    pub segment: Option<usize>,
    /// Number of equal segments (alternative to --segment).
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long, value_enum, default_value = "hann")]
    pub window: WindowArg,
    #[arg(long, value_enum, default_value = "mean")]
    pub detrend: DetrendArg,
    /// Fold onto non-negative frequencies.
    #[arg(long)]
    pub one_sided: bool,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Plot export: frequency and power columns.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Series,
    Correlation,
}

#[derive(Debug, Args, Serialize)]
pub struct TheoryArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[command(flatten)]
    pub oscillator: OscillatorArgs,
    #[arg(long)]
    pub phi: f64,
    /// Carrier frequency the output is centred on, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub f0: f64,
    /// Grid spacing, Hz (default Γ/(2π·20)).
    #[arg(long)]
    pub df: Option<f64>,
    /// Grid half-width, Hz (default: enough for the retained orders).
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Poisson-tail truncation tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "series")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Relative intensity noise width R.
    #[arg(long, default_value_t = 0.0)]
    pub rin_width: f64,
    /// Gauss–Hermite order for RIN broadening.
    #[arg(long, default_value_t = 21)]
    pub rin_order: usize,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    /// Spectrum JSON written by `psd`.
    #[arg(long, short)]
    pub spectrum: PathBuf,
    /// Carrier frequency, Hz.
    #[arg(long)]
    pub f0: f64,
    /// Initial Φ.
    #[arg(long)]
    pub phi: f64,
    #[command(flatten)]
    pub oscillator: OscillatorArgs,
    /// Included band `lo:hi` in Hz; repeat for several. Default: positive side.
    #[arg(long = "window", value_name = "LO:HI")]
    pub windows: Vec<String>,
    /// Carrier exclusion half-width in bins.
    #[arg(long, default_value_t = 3.0)]
    pub exclude_carrier: f64,
    /// Fixed RIN width R.
    #[arg(long)]
    pub rin_width: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub rin_order: usize,
    /// Hold a parameter at its initial value; repeatable.
    #[arg(long, value_name = "PARAM")]
    pub fix: Vec<String>,
    /// Simplex size tolerance, in estimated standard deviations.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 3000)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Leave the carrier line out of the model.
    #[arg(long)]
    pub no_carrier_model: bool,
    /// Skip the coarse grid scans that precede the simplex runs.
    #[arg(long)]
    pub no_basin_search: bool,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Plot export: frequency, data, model and residual over the window.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Scanned parameter.
    #[arg(long, default_value = "phi")]
    pub param: String,
    /// Central credible level.
    #[arg(long, default_value_t = 0.68)]
    pub level: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// Explicit grid `lo:hi:n`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Hold a further parameter at its MLE (conditional scan); repeatable.
    #[arg(long, value_name = "PARAM")]
    pub hold: Vec<String>,
    /// Plot export of the scan.
    #[arg(long)]
    pub scan_tsv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[command(flatten)]
    pub oscillator: OscillatorArgs,
    #[arg(long)]
    pub phi: f64,
    #[arg(long, default_value_t = 3e6)]
    pub f0: f64,
    #[arg(long, default_value_t = 10e6)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub dt: f64,
    /// Seed of the first run; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub runs: usize,
    #[arg(long, default_value_t = 65536)]
    pub segment: usize,
    #[arg(long, default_value_t = 300.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1e-18)]
    pub mass: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_floor: f64,
    #[arg(long = "window", value_name = "LO:HI")]
    pub windows: Vec<String>,
    /// Carrier exclusion half-width in bins.
    #[arg(long, default_value_t = 3.0)]
    pub exclude_carrier: f64,
    /// Profile Φ in every run for interval coverage.
    #[arg(long)]
    pub profile: bool,
    #[arg(long, default_value_t = 0.68)]
    pub level: f64,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    #[arg(long, short)]
    pub output: PathBuf,
}

/// Parses `lo:hi`.
pub fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once(':').with_context(|| format!("band '{s}' is not of the form lo:hi"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad lower edge in '{s}'"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad upper edge in '{s}'"))?;
    Ok((lo, hi))
}

/// Parses `lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid '{s}' is not of the form lo:hi:n");
    }
    let lo: f64 = parts[0].trim().parse().context("bad grid start")?;
    let hi: f64 = parts[1].trim().parse().context("bad grid end")?;
    let n: usize = parts[2].trim().parse().context("bad grid size")?;
    if n < 3 || !(hi > lo) {
        bail!("grid needs hi > lo and at least 3 points");
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Turns a JSON object into long flags: `{"f0": 3e6, "one-sided": true,
/// "window": ["a:b", "c:d"]}` becomes `--f0 3000000 --one-sided --window a:b
/// --window c:d`. Underscores in keys are accepted for dashes.
pub fn config_to_flags(value: &serde_json::Value) -> Result<Vec<String>> {
    let obj = value.as_object().context("config file must hold a JSON object")?;
    let mut out = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| -> Result<Option<String>> {
            Ok(match v {
                serde_json::Value::String(s) => Some(s.clone()),
                serde_json::Value::Number(n) => Some(n.to_string()),
                serde_json::Value::Bool(_) | serde_json::Value::Null => None,
                _ => bail!("config key '{key}' must be a scalar or a list of scalars"),
            })
        };
        match v {
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                for item in items {
                    if let Some(s) = scalar(item)? {
                        out.push(flag.clone());
                        out.push(s);
                    }
                }
            }
            other => {
                if let Some(s) = scalar(other)? {
                    out.push(flag);
                    out.push(s);
                }
            }
        }
    }
    Ok(out)
}

const SUBCOMMANDS: [&str; 6] = ["simulate", "psd", "theory", "fit", "profile", "ensemble"];

/// Expands `--config FILE` into flags placed right after the subcommand, so
/// explicit flags (which come later) override them.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut config_path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config_path = Some(iter.next().context("--config needs a file")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            anyhow::Error::new(levspec::Error::InputNotFound(path.clone()))
        } else {
            anyhow::Error::new(e).context(format!("reading {path}"))
        }
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        anyhow::Error::new(levspec::Error::MalformedInput { path: path.clone(), reason: e.to_string() })
    })?;
    let flags = config_to_flags(&value)
        .map_err(|e| anyhow::Error::new(levspec::Error::InvalidConfig(format!("{path}: {e}"))))?;
    let pos = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map(|p| p + 1)
        .unwrap_or(rest.len());
    let tail = rest.split_off(pos);
    rest.extend(flags);
    rest.extend(tail);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_flags_precede_explicit_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"gamma": 1.0, "one_sided": true, "window": ["1:2", "3:4"], "skip": false}"#).unwrap();
        let args: Vec<String> =
            ["levspec", "fit", "--config", path.to_str().unwrap(), "--gamma", "2"].iter().map(|s| s.to_string()).collect();
        let out = expand_config(args).unwrap();
        assert_eq!(
            out,
            vec!["levspec", "fit", "--gamma", "1.0", "--one-sided", "--window", "1:2", "--window", "3:4", "--gamma", "2"]
        );
    }

    #[test]
    fn bands_and_grids() {
        assert_eq!(parse_band("2.8e6:3.2e6").unwrap(), (2.8e6, 3.2e6));
        assert!(parse_band("2.8e6").is_err());
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("1:0:3").is_err());
    }
}
