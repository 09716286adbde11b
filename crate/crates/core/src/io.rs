//! File formats.
//!
//! * Time series: raw little-endian `f64` samples in `<name>`, with a JSON
//!   sidecar `<name>.json` holding [`TimeSeriesHeader`].
//! * Spectra, theory spectra and fit results: single JSON documents.
//! * Plot exports: tab-separated columns with a `#`-prefixed header line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::sim::{SeriesMeta, TimeSeries};
use crate::spectral::SpectrumEstimate;
use crate::theory::{ModelParams, TheorySpectrum};
use crate::{Error, Result};

/// Value of [`TimeSeriesHeader::format`] for raw little-endian doubles.
pub const F64_LE: &str = "f64le";

/// Sidecar describing a raw time-series file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesHeader {
    pub format: String,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: Option<u64>,
    pub meta: SeriesMeta,
    /// Effective configuration of the run that produced the file.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Spectrum estimate document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    #[serde(flatten)]
    pub spectrum: SpectrumEstimate,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Theory spectrum document, presented around carrier `f0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryFile {
    pub f0: f64,
    pub df: f64,
    pub half_width: f64,
    pub n_points: usize,
    /// Continuous part, normalized to unit total mass with the carrier.
    pub density: Vec<f64>,
    pub carrier_weight: f64,
    pub params: ModelParams,
    pub truncation_order: usize,
    pub truncation_bound: f64,
    /// `v0²`; multiply `density` by it for physical units.
    pub scale: f64,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl TheoryFile {
    pub fn new(spectrum: &TheorySpectrum, f0: f64, config: serde_json::Value) -> Self {
        TheoryFile {
            f0,
            df: spectrum.grid.df,
            half_width: spectrum.grid.half_width(),
            n_points: spectrum.grid.n_points,
            density: spectrum.density.clone(),
            carrier_weight: spectrum.carrier_weight,
            params: spectrum.params,
            truncation_order: spectrum.truncation_order,
            truncation_bound: spectrum.truncation_bound,
            scale: spectrum.scale,
            config,
        }
    }

    /// Absolute frequencies of the density samples.
    pub fn freqs(&self) -> Vec<f64> {
        let h = (self.n_points / 2) as f64;
        (0..self.n_points).map(|i| self.f0 + (i as f64 - h) * self.df).collect()
    }
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::InputNotFound(path.display().to_string()),
        _ => Error::Io(e),
    })
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedInput { path: path.display().to_string(), reason: reason.into() }
}

/// Writes samples and sidecar; returns the sidecar path.
pub fn write_time_series(path: &Path, series: &TimeSeries, config: &serde_json::Value) -> Result<PathBuf> {
    let mut out = BufWriter::new(File::create(path)?);
    for x in series.samples() {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    let header = TimeSeriesHeader {
        format: F64_LE.to_string(),
        n_samples: series.len(),
        sample_rate: series.sample_rate(),
        duration: series.duration(),
        seed: series.meta.seed,
        meta: series.meta.clone(),
        config: config.clone(),
    };
    let side = sidecar_path(path);
    write_json(&side, &header)?;
    Ok(side)
}

/// Reads a time series. Without a sidecar, `sample_rate` must be supplied.
pub fn read_time_series(path: &Path, sample_rate: Option<f64>) -> Result<(TimeSeries, Option<TimeSeriesHeader>)> {
    let side = sidecar_path(path);
    let header: Option<TimeSeriesHeader> = if side.exists() { Some(read_json(&side)?) } else { None };
    if let Some(h) = &header {
        if h.format != F64_LE {
            return Err(malformed(&side, format!("unsupported sample format '{}'", h.format)));
        }
    }
    let mut bytes = Vec::new();
    BufReader::new(open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(malformed(path, format!("length {} is not a multiple of 8 bytes", bytes.len())));
    }
    let samples: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    if let Some(h) = &header {
        if h.n_samples != samples.len() {
            return Err(malformed(path, format!("sidecar declares {} samples, file holds {}", h.n_samples, samples.len())));
        }
    }
    let fs = match (sample_rate, &header) {
        (Some(fs), _) => fs,
        (None, Some(h)) => h.sample_rate,
        (None, None) => {
            return Err(Error::InvalidConfig(format!(
                "no sidecar {} and no sample rate given",
                side.display()
            )))
        }
    };
    let meta = header.as_ref().map(|h| h.meta.clone()).unwrap_or_else(SeriesMeta::external);
    let series = TimeSeries::new(fs, samples, meta).map_err(|e| match e {
        Error::EmptyInput => malformed(path, "no samples"),
        other => other,
    })?;
    Ok((series, header))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(open(path)?);
    serde_json::from_reader(reader).map_err(|e| malformed(path, e.to_string()))
}

/// Writes equal-length columns as TSV.
pub fn write_tsv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(Error::InvalidConfig("TSV header and column counts differ".into()));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidConfig("TSV columns have different lengths".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# {}", headers.join("\t"))?;
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:e}", c[i])).collect();
        writeln!(out, "{}", row.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}
