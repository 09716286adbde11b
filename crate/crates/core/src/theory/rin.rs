//! Broadening by slow relative intensity noise.
//!
//! An intensity offset `r` rescales the spectrum by `(1 + r)`, the natural
//! frequency by `√(1 + r)` and the phase depth by `1/√(1 + r)`. The observed
//! spectrum is the average over `r ~ N(0, R²)`, evaluated with Gauss–Hermite
//! quadrature.

use super::{ModelParams, TheorySpectrum};
use crate::{Error, Result};

pub const DEFAULT_QUAD_ORDER: usize = 21;

/// Largest supported relative width R.
pub const MAX_RIN_WIDTH: f64 = 0.3;

/// Nodes and weights for `∫ e^{-x²} f(x) dx ≈ Σ w_i f(x_i)`.
///
/// Newton iteration on the orthonormal Hermite recurrence with the usual
/// asymptotic starting guesses.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Intensity-rescaled parameters for offset `r`.
pub fn rescaled(params: &ModelParams, r: f64) -> ModelParams {
    let s = (1.0 + r).sqrt();
    ModelParams { phi: params.phi / s, omega: params.omega * s, gamma: params.gamma }
}

/// Probability-normalized quadrature nodes `(r_i, p_i)` with `Σ p_i = 1`.
fn rin_nodes(width: f64, order: usize) -> Result<Vec<(f64, f64)>> {
    if !(width >= 0.0 && width < MAX_RIN_WIDTH) {
        return Err(Error::InvalidConfig(format!("RIN width must lie in [0, {MAX_RIN_WIDTH}), got {width}")));
    }
    if order < 3 {
        return Err(Error::InvalidConfig(format!("quadrature order must be >= 3, got {order}")));
    }
    let (x, w) = gauss_hermite(order);
    let norm = std::f64::consts::PI.sqrt();
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let r = std::f64::consts::SQRT_2 * width * xi;
            if 1.0 + r <= 0.0 {
                Err(Error::Domain(1.0 + r))
            } else {
                Ok((r, wi / norm))
            }
        })
        .collect()
}

/// `E_r[(1 + r) S(Φ/√(1+r), Ω√(1+r), Γ)]` for any vector-valued spectrum
/// evaluator. With `width == 0` the evaluator's output is returned unchanged.
pub fn rin_average<F>(params: &ModelParams, width: f64, order: usize, mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(&ModelParams) -> Result<Vec<f64>>,
{
    if width == 0.0 {
        return eval(params);
    }
    let nodes = rin_nodes(width, order)?;
    let mut acc: Vec<f64> = Vec::new();
    for (r, p) in nodes {
        let s = eval(&rescaled(params, r))?;
        let c = p * (1.0 + r);
        if acc.is_empty() {
            acc = s.iter().map(|v| c * v).collect();
        } else {
            acc.iter_mut().zip(&s).for_each(|(a, v)| *a += c * v);
        }
    }
    Ok(acc)
}

/// RIN-broadened [`TheorySpectrum`]. `eval` computes the unbroadened spectrum
/// on a fixed grid.
pub fn rin_broadened<F>(params: &ModelParams, width: f64, order: usize, mut eval: F) -> Result<TheorySpectrum>
where
    F: FnMut(&ModelParams) -> Result<TheorySpectrum>,
{
    if width == 0.0 {
        return eval(params);
    }
    let nodes = rin_nodes(width, order)?;
    let mut out: Option<TheorySpectrum> = None;
    for (r, p) in nodes {
        let s = eval(&rescaled(params, r))?;
        let c = p * (1.0 + r);
        match out.as_mut() {
            None => {
                let mut first = s;
                first.density.iter_mut().for_each(|d| *d *= c);
                first.carrier_weight *= c;
                out = Some(first);
            }
            Some(acc) => {
                if !acc.grid.eq(&s.grid) {
                    return Err(Error::GridMismatch);
                }
                acc.density.iter_mut().zip(&s.density).for_each(|(a, v)| *a += c * v);
                acc.carrier_weight += c * s.carrier_weight;
                acc.truncation_order = acc.truncation_order.max(s.truncation_order);
                acc.truncation_bound = acc.truncation_bound.max(s.truncation_bound);
            }
        }
    }
    let mut out = out.expect("at least three nodes");
    out.params = *params;
    Ok(out)
}
