use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Tukey–Hanning, `w_m = (1 - cos(2πm/(M-1)))/2`.
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    /// Subtract each segment's mean before windowing.
    #[default]
    Mean,
    None,
}

/// Taper and pre-processing applied to each periodogram segment.
///
/// Periodograms are divided by `mean(w²)`, so a white-noise level is estimated
/// without bias whatever the taper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WindowSpec {
    pub kind: WindowKind,
    #[serde(default)]
    pub detrend: Detrend,
}

impl WindowSpec {
    pub fn hann() -> Self {
        WindowSpec { kind: WindowKind::Hann, detrend: Detrend::Mean }
    }

    pub fn rectangular() -> Self {
        WindowSpec { kind: WindowKind::Rectangular, detrend: Detrend::Mean }
    }

    pub fn with_detrend(mut self, detrend: Detrend) -> Self {
        self.detrend = detrend;
        self
    }

    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        match self.kind {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann if len < 2 => vec![1.0; len],
            WindowKind::Hann => {
                let denom = (len - 1) as f64;
                (0..len)
                    .map(|m| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * m as f64 / denom).cos()))
                    .collect()
            }
        }
    }

    /// Power normalization `mean(w²)`.
    pub fn normalization(&self, len: usize) -> f64 {
        let w = self.coefficients(len);
        w.iter().map(|x| x * x).sum::<f64>() / len as f64
    }

    /// Variance inflation of a sum of periodogram ordinates caused by the
    /// correlation between neighbouring bins: `M Σw⁴ / (Σw²)²`.
    ///
    /// Equals 1 for the rectangular window and 35/18 for Hann (large M).
    pub fn bin_correlation_factor(&self, len: usize) -> f64 {
        let w = self.coefficients(len);
        let s2: f64 = w.iter().map(|x| x * x).sum();
        let s4: f64 = w.iter().map(|x| x.powi(4)).sum();
        len as f64 * s4 / (s2 * s2)
    }
}
