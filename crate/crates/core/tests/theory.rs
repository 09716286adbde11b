mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use common::{rho_oracle, rho_quadrature, sigma_oracle, OMEGA};
use levspec::theory::{
    correlation_rphiphi, middleton_series, narrowband_weights, poisson_truncation, rin_average, rin_broadened,
    sigma_zz, sigma_zz_tail_mass, FrequencyGrid, ModelParams, TheorySpectrum,
};

fn grid_for(p: &ModelParams, tol: f64) -> FrequencyGrid {
    let order = poisson_truncation(p.phi * p.phi, tol).order as f64;
    let mut half = (order * p.omega + 20.0 * p.gamma) / (2.0 * PI) + 100e3;
    while sigma_zz_tail_mass(p.omega, p.gamma, half) > 1e-4 {
        half *= 1.25;
    }
    FrequencyGrid::baseband(p.gamma / (2.0 * PI * 10.0), half).unwrap()
}

fn peak_mass(s: &TheorySpectrum, n: usize, spacing: f64) -> f64 {
    let mut m = if n == 0 { s.carrier_weight } else { 0.0 };
    for (i, d) in s.density.iter().enumerate() {
        if (s.grid.offset(i).abs() - n as f64 * spacing).abs() < 0.5 * spacing {
            m += d * s.grid.df;
        }
    }
    m
}

#[test]
fn closed_form_correlation_matches_quadrature() {
    for (gamma, t) in [(20e3, 3e-6), (20e3, 40e-6), (2.0 * OMEGA, 2e-6), (5.0 * OMEGA, 1e-6)] {
        let q = rho_quadrature(OMEGA, gamma, t, 2e8, 20_000_000);
        let c = rho_oracle(OMEGA, gamma, t);
        assert!((q - c).abs() < 1e-6, "Γ = {gamma}, t = {t}: quadrature {q}, closed form {c}");
    }
}

fn check_correlation(gamma: f64) {
    let phi = 0.6;
    let mut half = (OMEGA + 20.0 * gamma) / (2.0 * PI);
    while sigma_zz_tail_mass(OMEGA, gamma, half) > 2e-7 {
        half *= 1.25;
    }
    let decay = (gamma / 2.0).min(OMEGA * OMEGA / gamma);
    let grid = FrequencyGrid::baseband(decay / (2.0 * PI * 5.0), half).unwrap();
    let c = correlation_rphiphi(phi, OMEGA, gamma, &grid).unwrap();
    let h = grid.half_points();
    assert_eq!(c.values[h], phi * phi);
    let mut worst: f64 = 0.0;
    for (t, v) in c.times.iter().zip(&c.values) {
        if t.abs() * decay < 10.0 {
            worst = worst.max((v - phi * phi * rho_oracle(OMEGA, gamma, *t)).abs() / (phi * phi));
        }
    }
    assert!(worst < 1e-6, "Γ/Ω = {}: worst deviation {worst:e}", gamma / OMEGA);
}

#[test]
fn correlation_matches_closed_form_underdamped() {
    check_correlation(20e3);
    check_correlation(0.5 * OMEGA);
}

#[test]
fn correlation_matches_closed_form_critical() {
    check_correlation(2.0 * OMEGA);
}

#[test]
fn correlation_matches_closed_form_overdamped() {
    check_correlation(6.0 * OMEGA);
    let grid = FrequencyGrid::baseband(1e4, 5e7).unwrap();
    let c = correlation_rphiphi(1.0, OMEGA, 6.0 * OMEGA, &grid).unwrap();
    let h = grid.half_points();
    // Monotone decay over the first correlation times.
    for j in h..h + 200 {
        assert!(c.values[j + 1] < c.values[j]);
    }
}

#[test]
fn sigma_matches_written_out_spectrum() {
    let grid = FrequencyGrid::baseband(100.0, 2e6).unwrap();
    let s = sigma_zz(OMEGA, 20e3, &grid).unwrap();
    for (i, v) in s.iter().enumerate() {
        let o = sigma_oracle(OMEGA, 20e3, grid.offset(i));
        assert!((v / o - 1.0).abs() < 1e-12);
    }
}

#[test]
fn narrowband_convergence_is_monotone_in_gamma() {
    let spacing = OMEGA / (2.0 * PI);
    for phi in [0.4, 0.8, 1.2] {
        let w = narrowband_weights(phi, 3);
        let mut prev = vec![f64::INFINITY; 4];
        for ratio in [1e-2, 3e-3, 1e-3] {
            let p = ModelParams::new(phi, OMEGA, OMEGA * ratio);
            let s = middleton_series(&p, 1.0, &grid_for(&p, 1e-10), 1e-10).unwrap();
            for n in 0..4 {
                let err = (peak_mass(&s, n, spacing) / w[n] - 1.0).abs();
                assert!(err < prev[n], "Φ = {phi}, n = {n}, Γ/Ω = {ratio}: {err} not below {}", prev[n]);
                prev[n] = err;
            }
        }
    }
}

#[test]
fn rin_quadrature_matches_monte_carlo_on_closed_form() {
    // Pointwise spectrum with a closed form, cheap enough for 10⁵ draws.
    let p = ModelParams::new(0.35, 2.0 * PI * 69.8e3, 2.5e3);
    let freqs: Vec<f64> = (0..400).map(|i| 60e3 + 50.0 * i as f64).collect();
    let eval = |q: &ModelParams| -> levspec::Result<Vec<f64>> {
        Ok(freqs.iter().map(|&f| q.phi * q.phi * sigma_oracle(q.omega, q.gamma, f)).collect())
    };
    let width = 0.01;
    let normal = Normal::new(0.0, width).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut acc = vec![0.0; freqs.len()];
    for i in 0..n {
        let r = normal.inverse_cdf((i as f64 + rng.random::<f64>()) / n as f64);
        let q = ModelParams::new(p.phi / (1.0 + r).sqrt(), p.omega * (1.0 + r).sqrt(), p.gamma);
        for (a, v) in acc.iter_mut().zip(eval(&q).unwrap()) {
            *a += (1.0 + r) * v / n as f64;
        }
    }
    let max_dev = |order: usize| {
        let quad = rin_average(&p, width, order, eval).unwrap();
        quad.iter().zip(&acc).map(|(q, m)| (q / m - 1.0).abs()).fold(0.0, f64::max)
    };
    // The line shift per σ_r exceeds the half-width here, so low orders are
    // visibly short of convergence.
    let devs: Vec<f64> = [21, 41, 81].into_iter().map(max_dev).collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
    assert!(devs[2] < 1e-3, "{devs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn normalization_and_symmetry(phi in 0.0f64..2.0, log_ratio in -3.0f64..0.0) {
        let p = ModelParams::new(phi, OMEGA, OMEGA * 10f64.powf(log_ratio));
        let s = middleton_series(&p, 1.0, &grid_for(&p, 1e-8), 1e-8).unwrap();
        prop_assert!((s.total_mass() - 1.0).abs() < 1e-4, "mass {}", s.total_mass());
        let n = s.density.len();
        for i in 0..n / 2 {
            prop_assert_eq!(s.density[i], s.density[n - 1 - i]);
        }
        prop_assert!(s.density.iter().all(|&d| d >= -1e-15));
    }

    #[test]
    fn frequency_scaling(phi in 0.1f64..1.5, log_ratio in -2.0f64..0.0, scale in 0.2f64..5.0) {
        let p = ModelParams::new(phi, OMEGA, OMEGA * 10f64.powf(log_ratio));
        let grid = grid_for(&p, 1e-8);
        let q = ModelParams::new(phi, p.omega * scale, p.gamma * scale);
        let scaled_grid = FrequencyGrid { df: grid.df * scale, ..grid };
        let a = middleton_series(&p, 1.0, &grid, 1e-8).unwrap();
        let b = middleton_series(&q, 1.0, &scaled_grid, 1e-8).unwrap();
        let peak = a.density.iter().cloned().fold(0.0, f64::max);
        for (x, y) in a.density.iter().zip(&b.density) {
            prop_assert!((x - y * scale).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn harmonic_masses_decay(phi in 0.05f64..1.0, log_ratio in -3.0f64..-1.7) {
        let p = ModelParams::new(phi, OMEGA, OMEGA * 10f64.powf(log_ratio));
        let s = middleton_series(&p, 1.0, &grid_for(&p, 1e-10), 1e-10).unwrap();
        let spacing = OMEGA / (2.0 * PI);
        let masses: Vec<f64> = (0..5).map(|n| peak_mass(&s, n, spacing)).collect();
        for n in 0..4 {
            prop_assert!(masses[n + 1] < masses[n], "{:?}", masses);
        }
    }

    #[test]
    fn zero_rin_width_is_identity(phi in 0.0f64..1.5, log_ratio in -2.0f64..0.0) {
        let p = ModelParams::new(phi, OMEGA, OMEGA * 10f64.powf(log_ratio));
        let grid = grid_for(&p, 1e-8);
        let eval = |q: &ModelParams| middleton_series(q, 1.0, &grid, 1e-8);
        prop_assert_eq!(rin_broadened(&p, 0.0, 21, eval).unwrap(), eval(&p).unwrap());
    }
}
