//! Seeded random fields shared by unit tests and the acceptance suite.

use crate::spectral::{SpectralField, TorusGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Complex Gaussian field with i.i.d. unit-variance coefficients.
pub fn rand_field(grid: TorusGrid, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Complex64> = (0..grid.total_modes())
        .map(|_| {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    SpectralField::from_coeffs(grid, coeffs, false).unwrap()
}

/// Random field with Hermitian-symmetric coefficients (real in physical
/// space), built by symmetrizing a complex Gaussian field.
pub fn rand_real_field(grid: TorusGrid, seed: u64) -> SpectralField {
    let raw = rand_field(grid, seed);
    let mut out = SpectralField::zeros(grid);
    let n = grid.points_per_axis() as i64;
    for flat in 0..grid.total_modes() {
        let k = grid.signed_index(flat);
        // Drop modes without a representable mirror so symmetry is exact.
        if (0..grid.dim()).any(|a| k[a] == -n / 2) {
            continue;
        }
        let mut neg = [0i64; 3];
        for a in 0..grid.dim() {
            neg[a] = -k[a];
        }
        let mirror = grid.flat_index(&neg[..grid.dim()]).unwrap();
        let value = 0.5 * (raw.coeffs()[flat] + raw.coeffs()[mirror].conj());
        out.coeffs_mut()[flat] = value;
    }
    out.set_real(true);
    debug_assert!(out.hermitian_deviation() < 1e-12);
    out
}
