//! Goodness-of-fit helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One-sample Kolmogorov–Smirnov test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS test of `data` against an arbitrary continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> KsTest {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    KsTest { statistic: d, p_value: kolmogorov_pvalue(n, d), n }
}

/// KS test of `data` against χ²_ν.
pub fn ks_test_chi2(data: &[f64], nu: f64) -> KsTest {
    let dist = ChiSquared::new(nu).expect("degrees of freedom must be positive");
    ks_test(data, |x| dist.cdf(x))
}

/// Asymptotic p-value `Q_KS(λ)` with Stephens' small-sample correction
/// `λ = (√n + 0.12 + 0.11/√n) D`.
pub fn kolmogorov_pvalue(n: usize, d: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_q(lambda)
}

/// Complementary Kolmogorov distribution `2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (a2 * (k * k) as f64).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
