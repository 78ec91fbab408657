//! Shared FFT plumbing: plan cache and row-major n-dimensional transforms.
//!
//! All transforms here are *unnormalized* (rustfft convention); callers apply
//! their own scaling. Forward means the kernel `e^{-2 pi i jk/n}`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Hash, PartialEq, Eq, Clone, Copy)]
struct PlanKey {
    len: usize,
    inverse: bool,
}

type PlanCache = Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>;

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(PlanKey { len, inverse })
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place unnormalized FFT along every axis of a row-major array.
///
/// `dims` lists axis lengths slowest-first; `data.len()` must equal their
/// product.
pub fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    assert_eq!(data.len(), dims.iter().product::<usize>());
    for axis in 0..dims.len() {
        fft_axis(data, dims, axis, inverse);
    }
}

fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, inverse: bool) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let fft = plan(n, inverse);
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();

    if inner == 1 {
        // Contiguous lines: rustfft processes the buffer in chunks of n.
        fft.process(data);
        return;
    }

    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[base + j * inner];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, value) in line.iter().enumerate() {
                data[base + j * inner] = *value;
            }
        }
    }
}

/// Smallest 5-smooth integer (2^a 3^b 5^c) that is >= `min`.
///
/// Used to pick cheap transform lengths for zero-padded convolutions.
pub fn good_fft_size(min: usize) -> usize {
    assert!(min >= 1);
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < best {
        let mut p23 = p2;
        while p23 < best {
            let mut p235 = p23;
            while p235 < best {
                if p235 >= min {
                    best = best.min(p235);
                    break;
                }
                p235 *= 5;
            }
            if p23 > best / 3 {
                break;
            }
            p23 *= 3;
        }
        if p2 > best / 2 {
            break;
        }
        p2 *= 2;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_sizes() {
        assert_eq!(good_fft_size(1), 1);
        assert_eq!(good_fft_size(129), 135);
        assert_eq!(good_fft_size(257), 270);
        assert_eq!(good_fft_size(64), 64);
        assert_eq!(good_fft_size(7), 8);
    }

    #[test]
    fn forward_inverse_round_trip_2d() {
        let dims = [4usize, 8usize];
        let mut data: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i * i) as f64 * 0.01))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, &dims, false);
        fft_nd(&mut data, &dims, true);
        let scale = 1.0 / 32.0;
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a * scale - b).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_direct_dft_1d() {
        let n = 8;
        let mut data: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.7).cos()))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, &[n], false);
        for (k, out) in data.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, value) in orig.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                acc += value * Complex64::new(angle.cos(), angle.sin());
            }
            assert!((acc - out).norm() < 1e-12);
        }
    }
}
