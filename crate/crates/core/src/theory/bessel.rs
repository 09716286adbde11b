//! Bessel-function weights of the narrow-band and purely harmonic limits.

/// `e^{-x} I_n(x)` by upward summation of the power series
/// `I_n(x) = Σ_k (x/2)^{2k+n} / (k! (k+n)!)`.
///
/// Terms are generated by their ratio from a log-space first term, so the
/// scaled value neither overflows nor suffers the instability of recurrences
/// at small argument.
pub fn bessel_i_scaled(n: usize, x: f64) -> f64 {
    assert!(x >= 0.0, "argument must be non-negative");
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let ln_first = n as f64 * half.ln() - ln_factorial(n) - x;
    let mut term = ln_first.exp();
    let mut sum = term;
    let q = half * half;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term <= 1e-17 * sum && k as f64 > half {
            return sum;
        }
        if k > 10_000 {
            return sum;
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `J_0(x) … J_{n_max}(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_all(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let big = n_max.max(ax.ceil() as usize);
    let mut start = big + 30 + (40.0 * big as f64).sqrt() as usize;
    start += start % 2;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-300; // J_k
    let mut even_sum = 0.0;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds J_{k-1}.
        let order = k - 1;
        if order <= n_max {
            out[order] = j_cur;
        }
        if order % 2 == 0 && order > 0 {
            even_sum += j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            even_sum *= 1e-250;
            for o in out.iter_mut() {
                *o *= 1e-250;
            }
        }
    }
    let norm = j_cur + 2.0 * even_sum;
    for (n, o) in out.iter_mut().enumerate() {
        *o /= norm;
        if x < 0.0 && n % 2 == 1 {
            *o = -*o;
        }
    }
    out
}

/// Spectral mass at harmonics `0..=n_max` when the phase has a purely
/// sinusoidal correlation function `Φ² cos Ωt` (the Γ → 0 limit):
/// `e^{-Φ²} [I_0(Φ²), 2 I_1(Φ²), …, 2 I_{n_max}(Φ²)]`.
pub fn narrowband_weights(phi: f64, n_max: usize) -> Vec<f64> {
    let x = phi * phi;
    (0..=n_max)
        .map(|n| {
            let w = bessel_i_scaled(n, x);
            if n == 0 {
                w
            } else {
                2.0 * w
            }
        })
        .collect()
}

/// Harmonic weights `J_n(φ0)²` of purely sinusoidal motion with peak phase
/// excursion `φ0`. Compare at equal variance by passing `φ0 = √2 Φ`.
pub fn harmonic_bessel_weights(phi0: f64, n_max: usize) -> Vec<f64> {
    bessel_j_all(n_max, phi0).into_iter().map(|j| j * j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bessel_j_series(n: usize, x: f64) -> f64 {
        let half = 0.5 * x;
        let mut term = half.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        let mut sum = term;
        for k in 1..60 {
            term *= -half * half / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn modified_bessel_reference_values() {
        // I_0(1) = 1.2660658777520082, I_1(1) = 0.5651591039924851,
        // I_2(2) = 0.6889484476987382.
        let e1 = 1f64.exp();
        assert!((bessel_i_scaled(0, 1.0) * e1 - 1.266_065_877_752_008_2).abs() < 1e-14);
        assert!((bessel_i_scaled(1, 1.0) * e1 - 0.565_159_103_992_485_1).abs() < 1e-14);
        assert!((bessel_i_scaled(2, 2.0) * 2f64.exp() - 0.688_948_447_698_738_2).abs() < 1e-13);
        assert_eq!(bessel_i_scaled(0, 0.0), 1.0);
        assert_eq!(bessel_i_scaled(3, 0.0), 0.0);
    }

    #[test]
    fn narrowband_weights_sum_to_one() {
        for phi in [0.0, 0.1, 0.5, 1.0, 1.5, 2.0] {
            let total: f64 = narrowband_weights(phi, 60).iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "phi={phi}: {total}");
        }
        assert_eq!(narrowband_weights(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn miller_matches_series() {
        for x in [1e-3, 0.1, 1.0, 3.8317, 7.5] {
            let all = bessel_j_all(8, x);
            for (n, j) in all.iter().enumerate() {
                let s = bessel_j_series(n, x);
                assert!((j - s).abs() < 1e-12 * s.abs().max(1e-3), "J_{n}({x}): {j} vs {s}");
            }
        }
    }

    #[test]
    fn first_harmonic_vanishes_at_first_zero_of_j1() {
        let w = harmonic_bessel_weights(3.831_705_970_207_512, 2);
        assert!(w[1] < 1e-28);
        // The modified-Bessel weights never vanish.
        for phi in [0.5, 1.0, 2.0, 2.71, 3.83] {
            assert!(narrowband_weights(phi, 4).iter().all(|&w| w > 0.0));
        }
        assert_eq!(harmonic_bessel_weights(0.0, 2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn small_depth_ratios_agree() {
        let phi = 0.05f64;
        let j = harmonic_bessel_weights(2f64.sqrt() * phi, 1);
        let i = narrowband_weights(phi, 1);
        // Both first-to-zeroth ratios are Φ²/2 to leading order; J_n² counts
        // one side of the line pair, so double it.
        let rj = 2.0 * j[1] / j[0];
        let ri = i[1] / i[0];
        assert!(((rj - ri) / ri).abs() < 0.01, "{rj} vs {ri}");
    }
}
