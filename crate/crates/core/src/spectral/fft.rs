use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, inverse))
            .or_insert_with(|| if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) })
            .clone()
    })
}

/// Unnormalized forward DFT, `X_k = Σ x_m e^{-2πikm/N}`.
pub fn forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// Unnormalized inverse DFT, `x_m = Σ X_k e^{+2πikm/N}`.
pub fn inverse(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// Smallest `2^a 3^b 5^c` that is at least `min`.
pub fn fast_len(min: usize) -> usize {
    let min = min.max(1);
    let mut best = min.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut n = p35;
            while n < min {
                n *= 2;
            }
            best = best.min(n);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(45242), 46080);
        assert_eq!(fast_len(65536), 65536);
        for m in 1..2000 {
            let n = fast_len(m);
            assert!(n >= m);
            let mut r = n;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            assert_eq!(r, 1);
        }
    }

    #[test]
    fn forward_then_inverse_scales_by_length() {
        let x: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut y = x.clone();
        forward(&mut y);
        inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a * 12.0 - b).norm() < 1e-12);
        }
    }
}
