//! Torus discretization, discrete Fourier transforms, multiplier application
//! and dealiased pointwise products.
//!
//! # Conventions
//!
//! The domain is the periodic box `[0, 2*pi*L)^d`. Grid point `j` sits at
//! `x_a = 2*pi*L*j_a/N`, and mode index `k in [-N/2, N/2-1]^d` represents the
//! wave `exp(i (k/L) . x)`, so the *physical* frequency is `xi = k/L`.
//! Coefficients are stored in FFT order (`0, 1, .., N/2-1, -N/2, .., -1` per
//! axis, row major, axis 0 slowest).
//!
//! The transform pair is unitary:
//!
//! ```text
//! coeff[k]   = N^{-d/2} * sum_j samples[j] * exp(-2 pi i k.j / N)
//! samples[j] = N^{-d/2} * sum_k coeff[k]   * exp(+2 pi i k.j / N)
//! ```
//!
//! so Parseval reads `sum_j |samples[j]|^2 = sum_k |coeff[k]|^2` exactly, and
//! the physical integral is `int |f|^2 dx = (2 pi L / N)^d * sum_j |samples[j]|^2`.
//! Every norm in this crate is the plain `l^2` norm of these coefficients.

use crate::error::{KgsError, Result};
use crate::fft::fft_nd;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Uniform discretization of the torus `[0, 2*pi*L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_axis: usize,
    length_scale: f64,
}

impl TorusGrid {
    /// Build a grid with `points_per_axis` points (power of two, >= 8) on each
    /// of `dim in {1,2,3}` axes and period `2*pi*length_scale`.
    pub fn new(dim: usize, points_per_axis: usize, length_scale: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(KgsError::Domain(format!("dimension must be 1..=3, got {dim}")));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(KgsError::Domain(format!(
                "points per axis must be a power of two >= 8, got {points_per_axis}"
            )));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(KgsError::Domain(format!(
                "length scale must be positive and finite, got {length_scale}"
            )));
        }
        Ok(Self {
            dim,
            points_per_axis,
            length_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// The `L` in the period `2*pi*L`; physical frequencies are `k/L`.
    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Total number of modes / samples, `N^d`.
    pub fn total_modes(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.points_per_axis; self.dim]
    }

    /// Signed integer frequency vector of a flat coefficient index.
    ///
    /// Unused trailing axes are zero, so returned vectors can always be read
    /// as `[i64; 3]`.
    pub fn signed_index(&self, mut flat: usize) -> [i64; 3] {
        let n = self.points_per_axis;
        let mut k = [0i64; 3];
        for axis in (0..self.dim).rev() {
            let i = flat % n;
            flat /= n;
            k[axis] = signed(i, n);
        }
        k
    }

    /// Flat index of a signed integer frequency, or `None` if out of range.
    pub fn flat_index(&self, k: &[i64]) -> Option<usize> {
        let n = self.points_per_axis as i64;
        if k.len() != self.dim {
            return None;
        }
        let mut flat = 0usize;
        for &ka in k {
            if ka < -n / 2 || ka >= n / 2 {
                return None;
            }
            let i = if ka >= 0 { ka } else { ka + n } as usize;
            flat = flat * n as usize + i;
        }
        Some(flat)
    }

    /// Physical frequency `xi = k/L` of a flat index.
    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let k = self.signed_index(flat);
        let l = self.length_scale;
        [k[0] as f64 / l, k[1] as f64 / l, k[2] as f64 / l]
    }

    /// Dealiasing cutoff of the 2/3 rule: modes with any `|k_a| > floor(N/3)`
    /// are dropped. For power-of-two `N` this satisfies `3*floor(N/3) <= N-1`,
    /// which makes truncated products alias-free.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.points_per_axis / 3) as i64
    }

    /// Largest `l^1` norm of a physical frequency on the lattice.
    pub fn max_ell1_frequency(&self) -> f64 {
        self.dim as f64 * (self.points_per_axis as f64 / 2.0) / self.length_scale
    }
}

fn signed(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// `l^1` norm of a frequency vector.
pub fn ell1(xi: &[f64; 3]) -> f64 {
    xi[0].abs() + xi[1].abs() + xi[2].abs()
}

/// Squared Euclidean norm of a frequency vector.
pub fn norm_sq(xi: &[f64; 3]) -> f64 {
    xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
}

/// Japanese bracket `<xi> = sqrt(1 + |xi|^2)`.
pub fn bracket(xi: &[f64; 3]) -> f64 {
    (1.0 + norm_sq(xi)).sqrt()
}

/// A field stored by its Fourier coefficients on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
    /// Whether the field represents a real-valued physical function, i.e.
    /// coefficients are Hermitian-symmetric.
    real: bool,
}

impl SpectralField {
    /// Zero field.
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.total_modes()],
            real: true,
        }
    }

    /// Build from raw coefficients in FFT order.
    pub fn from_coeffs(grid: TorusGrid, coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        if coeffs.len() != grid.total_modes() {
            return Err(KgsError::ShapeMismatch {
                expected: grid.total_modes(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs, real })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn set_real(&mut self, real: bool) {
        self.real = real;
    }

    /// Coefficient at signed frequency `k` (zero outside the lattice).
    pub fn coeff_at(&self, k: &[i64]) -> Complex64 {
        self.grid
            .flat_index(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn set_coeff(&mut self, k: &[i64], value: Complex64) {
        if let Some(i) = self.grid.flat_index(k) {
            self.coeffs[i] = value;
        }
    }

    /// `l^2` norm of the coefficients (= physical `L^2` norm under the fixed
    /// normalization).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= alpha;
        }
        out.real = self.real && alpha.im == 0.0;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += o;
        }
        out.real = self.real && other.real;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c -= o;
        }
        out.real = self.real && other.real;
        Ok(out)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: Complex64, other: &Self) -> Result<()> {
        self.check_same_grid(other)?;
        for (c, o) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c += alpha * o;
        }
        self.real = self.real && other.real && alpha.im == 0.0;
        Ok(())
    }

    /// Complex conjugate of the physical function: spectrally the reflected
    /// conjugate `conj_hat(k) = conj(hat(-k))`.
    pub fn conjugate(&self) -> Self {
        let mut out = Self::zeros(self.grid);
        out.real = self.real;
        let n = self.grid.points_per_axis as i64;
        for (flat, c) in self.coeffs.iter().enumerate() {
            let k = self.grid.signed_index(flat);
            let mut neg = [0i64; 3];
            let mut representable = true;
            for a in 0..self.grid.dim {
                neg[a] = -k[a];
                if neg[a] >= n / 2 {
                    representable = false;
                }
            }
            if representable {
                if let Some(j) = self.grid.flat_index(&neg[..self.grid.dim]) {
                    out.coeffs[j] = c.conj();
                }
            }
        }
        out
    }

    /// Largest deviation from Hermitian symmetry, relative to the largest
    /// coefficient magnitude.
    pub fn hermitian_deviation(&self) -> f64 {
        let scale = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let conj = self.conjugate();
        self.coeffs
            .iter()
            .zip(conj.coeffs.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max)
            / scale
    }

    /// Zero every mode with some `|k_a| > floor(N/3)` (the 2/3 rule).
    pub fn dealias_truncate(&self) -> Self {
        let cutoff = self.grid.dealias_cutoff();
        let mut out = self.clone();
        for (flat, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.grid.signed_index(flat);
            if (0..self.grid.dim).any(|a| k[a].abs() > cutoff) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(KgsError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

/// Dispersion relation tags shared by the linear propagators and the Bourgain
/// modulation weights.
///
/// The weight surface is `tau = h(xi)` with `h` as listed; the exact free
/// flows of the first-order system multiply coefficients by `e^{-i t |xi|^2}`
/// (Schrodinger) and `e^{ -/+ i t <xi> }` (the two Klein-Gordon halves).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispersionTag {
    /// `h(xi) = -|xi|^2`
    Schrodinger,
    /// `h(xi) = -|xi|` (the `n_+` half-wave, `X_+` spaces)
    WavePlus,
    /// `h(xi) = +|xi|` (the `n_-` half-wave, `X_-` spaces)
    WaveMinus,
}

impl DispersionTag {
    /// The modulation-weight dispersion `h(xi)`.
    pub fn h(&self, xi: &[f64; 3]) -> f64 {
        match self {
            DispersionTag::Schrodinger => -norm_sq(xi),
            DispersionTag::WavePlus => -norm_sq(xi).sqrt(),
            DispersionTag::WaveMinus => norm_sq(xi).sqrt(),
        }
    }
}

/// Predeclared Fourier multiplier families, all functions of the physical
/// frequency `xi = k/L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierSymbol {
    /// `<xi>^s`
    BracketPower { s: f64 },
    /// `e^{sigma * ||xi||_1}` (sigma of either sign)
    Ell1Exp { sigma: f64 },
    /// `e^{-i t |xi|^2}`, the free Schrodinger flow of `i u_t + Lap u = 0`.
    SchrodingerPhase { t: f64 },
    /// `e^{-i t <xi>}` (plus) / `e^{+i t <xi>}` (minus), the free flows of the
    /// two Klein-Gordon half-waves `i dt n_pm = +/- <D> n_pm`.
    KleinGordonPhase { t: f64, tag: KgSign },
    /// `<xi>^{-1}`
    InverseBracket,
}

/// Which Klein-Gordon half-wave a phase belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KgSign {
    Plus,
    Minus,
}

impl MultiplierSymbol {
    pub fn eval(&self, xi: &[f64; 3]) -> Complex64 {
        match *self {
            MultiplierSymbol::BracketPower { s } => Complex64::new(bracket(xi).powf(s), 0.0),
            MultiplierSymbol::Ell1Exp { sigma } => Complex64::new((sigma * ell1(xi)).exp(), 0.0),
            MultiplierSymbol::SchrodingerPhase { t } => {
                let phase = -t * norm_sq(xi);
                Complex64::new(phase.cos(), phase.sin())
            }
            MultiplierSymbol::KleinGordonPhase { t, tag } => {
                let phase = match tag {
                    KgSign::Plus => -t * bracket(xi),
                    KgSign::Minus => t * bracket(xi),
                };
                Complex64::new(phase.cos(), phase.sin())
            }
            MultiplierSymbol::InverseBracket => Complex64::new(1.0 / bracket(xi), 0.0),
        }
    }

    /// The exact propagator multiplier of a dispersion tag over time `t`.
    pub fn propagator(tag: DispersionTag, t: f64) -> Self {
        match tag {
            DispersionTag::Schrodinger => MultiplierSymbol::SchrodingerPhase { t },
            DispersionTag::WavePlus => MultiplierSymbol::KleinGordonPhase { t, tag: KgSign::Plus },
            DispersionTag::WaveMinus => MultiplierSymbol::KleinGordonPhase {
                t,
                tag: KgSign::Minus,
            },
        }
    }
}

/// Unitary forward transform: physical samples to spectral coefficients.
///
/// `samples[j]` is the field value at `x_a = 2 pi L j_a / N`, row major.
pub fn forward_transform(samples: &[Complex64], grid: TorusGrid) -> Result<SpectralField> {
    if samples.len() != grid.total_modes() {
        return Err(KgsError::ShapeMismatch {
            expected: grid.total_modes(),
            got: samples.len(),
        });
    }
    let mut coeffs = samples.to_vec();
    fft_nd(&mut coeffs, &grid.dims(), false);
    let scale = 1.0 / (grid.total_modes() as f64).sqrt();
    for c in &mut coeffs {
        *c *= scale;
    }
    SpectralField::from_coeffs(grid, coeffs, false)
}

/// Unitary inverse transform: spectral coefficients to physical samples.
pub fn inverse_transform(field: &SpectralField) -> Vec<Complex64> {
    let grid = field.grid();
    let mut samples = field.coeffs().to_vec();
    fft_nd(&mut samples, &grid.dims(), true);
    let scale = 1.0 / (grid.total_modes() as f64).sqrt();
    for s in &mut samples {
        *s *= scale;
    }
    samples
}

/// Apply a Fourier multiplier: `out(k) = m(k/L) * in(k)`.
///
/// The reality flag survives only when the symbol is real and even on the
/// lattice, which is checked from the evaluated symbol values.
pub fn apply_multiplier(field: &SpectralField, m: &MultiplierSymbol) -> Result<SpectralField> {
    let grid = *field.grid();
    let total = grid.total_modes();
    let mut values = Vec::with_capacity(total);
    for flat in 0..total {
        let xi = grid.frequency(flat);
        let v = m.eval(&xi);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(KgsError::NonFiniteSymbol { xi });
        }
        values.push(v);
    }

    let real_even = symbol_is_real_even(&grid, &values);
    let mut out = field.clone();
    for (c, v) in out.coeffs_mut().iter_mut().zip(values.iter()) {
        *c *= v;
    }
    out.set_real(field.is_real() && real_even);
    Ok(out)
}

fn symbol_is_real_even(grid: &TorusGrid, values: &[Complex64]) -> bool {
    let n = grid.points_per_axis() as i64;
    for (flat, v) in values.iter().enumerate() {
        if v.im != 0.0 {
            return false;
        }
        let k = grid.signed_index(flat);
        let mut neg = [0i64; 3];
        let mut representable = true;
        for a in 0..grid.dim() {
            neg[a] = -k[a];
            if neg[a] >= n / 2 {
                representable = false;
            }
        }
        if representable {
            if let Some(j) = grid.flat_index(&neg[..grid.dim()]) {
                if (values[j] - v).norm() > 1e-14 * v.norm().max(1.0) {
                    return false;
                }
            }
        }
    }
    true
}

/// Spectral coefficients of the pointwise product `f*g`, dealiased with the
/// 2/3 rule before and after the multiplication.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    if f.grid() != g.grid() {
        return Err(KgsError::GridMismatch(format!(
            "{:?} vs {:?}",
            f.grid(),
            g.grid()
        )));
    }
    let ft = f.dealias_truncate();
    let gt = g.dealias_truncate();
    let fs = inverse_transform(&ft);
    let gs = inverse_transform(&gt);
    let prod: Vec<Complex64> = fs.iter().zip(gs.iter()).map(|(a, b)| a * b).collect();
    let mut out = forward_transform(&prod, *f.grid())?;
    out = out.dealias_truncate();
    out.set_real(f.is_real() && g.is_real());
    Ok(out)
}

/// Dealiased `|u|^2 = u * conj(u)`, exactly real in physical space by
/// construction.
pub fn modulus_squared(u: &SpectralField) -> Result<SpectralField> {
    let ut = u.dealias_truncate();
    let us = inverse_transform(&ut);
    let prod: Vec<Complex64> = us.iter().map(|a| Complex64::new(a.norm_sqr(), 0.0)).collect();
    let mut out = forward_transform(&prod, *u.grid())?;
    out = out.dealias_truncate();
    out.set_real(true);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_field, rand_real_field};
    use proptest::prelude::*;

    fn grid1d(n: usize, l: f64) -> TorusGrid {
        TorusGrid::new(1, n, l).unwrap()
    }

    #[test]
    fn constant_samples_map_to_zero_mode() {
        let grid = grid1d(8, 1.0);
        let samples = vec![Complex64::new(1.0, 0.0); 8];
        let field = forward_transform(&samples, grid).unwrap();
        assert!(field.coeff_at(&[0]).norm() > 0.0);
        for k in 1..4i64 {
            assert!(field.coeff_at(&[k]).norm() < 1e-13);
            assert!(field.coeff_at(&[-k]).norm() < 1e-13);
        }
        assert!(field.coeff_at(&[-4]).norm() < 1e-13);
    }

    #[test]
    fn pure_mode_maps_to_single_coefficient() {
        let grid = grid1d(16, 2.0);
        let n = 16usize;
        // e^{i (1/L) x} at x_j = 2 pi L j / N is e^{2 pi i j / N}.
        let samples: Vec<Complex64> = (0..n)
            .map(|j| {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        let field = forward_transform(&samples, grid).unwrap();
        for flat in 0..n {
            let k = grid.signed_index(flat);
            if k[0] == 1 {
                assert!((field.coeffs()[flat].norm() - 4.0).abs() < 1e-12);
            } else {
                assert!(field.coeffs()[flat].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_all_dims() {
        for d in 1..=3usize {
            let grid = TorusGrid::new(d, 8, 1.5).unwrap();
            let f = rand_field(grid, 11 + d as u64);
            let samples = inverse_transform(&f);
            let back = forward_transform(&samples, grid).unwrap();
            let err: f64 = f
                .coeffs()
                .iter()
                .zip(back.coeffs().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12 * f.l2_norm().max(1.0));
        }
    }

    #[test]
    fn parseval_holds() {
        for d in 1..=3usize {
            for n in [8usize, 16] {
                let grid = TorusGrid::new(d, n, 0.7).unwrap();
                let f = rand_field(grid, 5 * n as u64 + d as u64);
                let samples = inverse_transform(&f);
                let phys: f64 = samples.iter().map(|s| s.norm_sqr()).sum();
                let spec: f64 = f.coeffs().iter().map(|c| c.norm_sqr()).sum();
                assert!((phys - spec).abs() < 1e-12 * spec.max(1.0));
            }
        }
    }

    #[test]
    fn shape_error_on_length_mismatch() {
        let grid = grid1d(8, 1.0);
        let samples = vec![Complex64::new(0.0, 0.0); 7];
        assert!(matches!(
            forward_transform(&samples, grid),
            Err(KgsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_field_inverts_to_zero() {
        let grid = grid1d(8, 1.0);
        let samples = inverse_transform(&SpectralField::zeros(grid));
        assert!(samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn hermitian_field_has_real_samples() {
        let grid = grid1d(32, 1.0);
        let f = rand_real_field(grid, 42);
        assert!(f.hermitian_deviation() < 1e-12);
        let samples = inverse_transform(&f);
        let max_imag = samples.iter().map(|s| s.im.abs()).fold(0.0, f64::max);
        assert!(max_imag < 1e-12);
    }

    #[test]
    fn single_mode_traces_pure_wave() {
        let grid = grid1d(16, 3.0);
        let mut f = SpectralField::zeros(grid);
        f.set_coeff(&[2], Complex64::new(1.0, 0.0));
        let samples = inverse_transform(&f);
        let n = 16;
        for (j, s) in samples.iter().enumerate() {
            // Mode k=2 is e^{i 2 x / L} = e^{2 pi i * 2 j / N}, amplitude N^{-1/2}.
            let angle = 2.0 * std::f64::consts::PI * 2.0 * j as f64 / n as f64;
            let expected = Complex64::new(angle.cos(), angle.sin()) / (n as f64).sqrt();
            assert!((s - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn multiplier_identity_cases() {
        let grid = grid1d(16, 1.0);
        let f = rand_field(grid, 3);

        // <xi>^s on the constant field: <0> = 1.
        let mut constant = SpectralField::zeros(grid);
        constant.set_coeff(&[0], Complex64::new(2.5, 0.0));
        let out = apply_multiplier(&constant, &MultiplierSymbol::BracketPower { s: 3.7 }).unwrap();
        assert!((out.coeff_at(&[0]) - Complex64::new(2.5, 0.0)).norm() < 1e-14);

        // sigma = 0 exponential is the identity.
        let out = apply_multiplier(&f, &MultiplierSymbol::Ell1Exp { sigma: 0.0 }).unwrap();
        for (a, b) in out.coeffs().iter().zip(f.coeffs().iter()) {
            assert_eq!(a, b);
        }

        // Unimodular symbol preserves the l^2 norm.
        let out = apply_multiplier(&f, &MultiplierSymbol::SchrodingerPhase { t: 0.37 }).unwrap();
        assert!((out.l2_norm() - f.l2_norm()).abs() < 1e-13 * f.l2_norm());
    }

    #[test]
    fn multiplier_reality_flag() {
        let grid = grid1d(16, 1.0);
        let f = rand_real_field(grid, 9);
        assert!(f.is_real());
        let even = apply_multiplier(&f, &MultiplierSymbol::BracketPower { s: -2.0 }).unwrap();
        assert!(even.is_real());
        let phase = apply_multiplier(&f, &MultiplierSymbol::SchrodingerPhase { t: 0.1 }).unwrap();
        assert!(!phase.is_real());
    }

    #[test]
    fn non_finite_symbol_reports_frequency() {
        let grid = grid1d(64, 1.0);
        let f = rand_field(grid, 1);
        let err = apply_multiplier(&f, &MultiplierSymbol::Ell1Exp { sigma: 1e6 }).unwrap_err();
        assert!(matches!(err, KgsError::NonFiniteSymbol { .. }));
    }

    /// Brute-force dealiased product: exact convolution on the integer
    /// lattice followed by the same 2/3 truncation.
    fn oracle_product(f: &SpectralField, g: &SpectralField) -> SpectralField {
        let grid = *f.grid();
        let cutoff = grid.dealias_cutoff();
        let scale = 1.0 / (grid.total_modes() as f64).sqrt();
        let mut out = SpectralField::zeros(grid);
        let total = grid.total_modes();
        let keep = |k: &[i64; 3]| (0..grid.dim()).all(|a| k[a].abs() <= cutoff);
        for i in 0..total {
            let ki = grid.signed_index(i);
            if !keep(&ki) || f.coeffs()[i].norm() == 0.0 {
                continue;
            }
            for j in 0..total {
                let kj = grid.signed_index(j);
                if !keep(&kj) || g.coeffs()[j].norm() == 0.0 {
                    continue;
                }
                let sum = [ki[0] + kj[0], ki[1] + kj[1], ki[2] + kj[2]];
                if !keep(&sum) {
                    continue;
                }
                if let Some(flat) = grid.flat_index(&sum[..grid.dim()]) {
                    out.coeffs_mut()[flat] += f.coeffs()[i] * g.coeffs()[j] * scale;
                }
            }
        }
        out
    }

    #[test]
    fn product_of_pure_modes() {
        let grid = grid1d(16, 1.0);
        let mut f = SpectralField::zeros(grid);
        let mut g = SpectralField::zeros(grid);
        f.set_coeff(&[1], Complex64::new(2.0, 1.0));
        g.set_coeff(&[2], Complex64::new(0.5, -0.5));
        let p = dealiased_product(&f, &g).unwrap();
        let oracle = oracle_product(&f, &g);
        for flat in 0..grid.total_modes() {
            assert!((p.coeffs()[flat] - oracle.coeffs()[flat]).norm() < 1e-13);
            let k = grid.signed_index(flat);
            if k[0] != 3 {
                assert!(p.coeffs()[flat].norm() < 1e-13);
            }
        }
        assert!(p.coeff_at(&[3]).norm() > 0.1);
    }

    #[test]
    fn high_modes_do_not_alias() {
        for d in 1..=2usize {
            let grid = TorusGrid::new(d, 16, 1.0).unwrap();
            // Content at N/2 - 1 on every axis; truncation must kill it before
            // it can fold back into low modes.
            let mut f = rand_field(grid, 77);
            let mut g = rand_field(grid, 78);
            let hi = (grid.points_per_axis() / 2 - 1) as i64;
            let idx = vec![hi; d];
            f.set_coeff(&idx, Complex64::new(5.0, 0.0));
            g.set_coeff(&idx, Complex64::new(5.0, 0.0));
            let fast = dealiased_product(&f, &g).unwrap();
            let slow = oracle_product(&f, &g);
            let err = fast
                .coeffs()
                .iter()
                .zip(slow.coeffs().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "alias error {err} in d={d}");
        }
    }

    #[test]
    fn constant_times_constant() {
        let grid = grid1d(8, 1.0);
        // Physical constant 1.0 has coeff(0) = sqrt(N).
        let samples = vec![Complex64::new(1.0, 0.0); 8];
        let f = forward_transform(&samples, grid).unwrap();
        let p = dealiased_product(&f, &f).unwrap();
        let back = inverse_transform(&p);
        for s in back {
            assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn multiplier_is_linear(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let grid = grid1d(16, 1.0);
            let f = rand_field(grid, seed_a);
            let g = rand_field(grid, seed_b + 2000);
            let alpha = Complex64::new(0.7, -0.3);
            let beta = Complex64::new(-1.2, 0.4);
            let m = MultiplierSymbol::BracketPower { s: 1.3 };
            let combo = f.scale(alpha).add(&g.scale(beta)).unwrap();
            let lhs = apply_multiplier(&combo, &m).unwrap();
            let rhs = apply_multiplier(&f, &m).unwrap().scale(alpha)
                .add(&apply_multiplier(&g, &m).unwrap().scale(beta)).unwrap();
            let err = lhs.coeffs().iter().zip(rhs.coeffs().iter())
                .map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-14 * lhs.l2_norm().max(1.0));
        }

        #[test]
        fn dealiased_product_matches_oracle(seed in 0u64..500) {
            let grid = grid1d(16, 1.0);
            let f = rand_field(grid, seed);
            let g = rand_field(grid, seed + 9999);
            let fast = dealiased_product(&f, &g).unwrap();
            let slow = oracle_product(&f, &g);
            let err = fast.coeffs().iter().zip(slow.coeffs().iter())
                .map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12);
        }
    }
}
