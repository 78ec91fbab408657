//! Gevrey norms `G^{sigma,s}`, the embedding constant between them, and
//! discretized Bourgain norms `X^{sigma,s,b}_h` on a space-time frequency
//! lattice.
//!
//! The Gevrey norm of a spectral field is
//!
//! ```text
//! ||f||_{G^{sigma,s}} = sqrt( sum_k e^{2 sigma ||xi||_1} <xi>^{2s} |coeff(k)|^2 ),   xi = k/L,
//! ```
//!
//! and the Bourgain norm adds the modulation weight `<tau - h(xi)>^b` on a
//! `(xi, tau)` lattice. With `sigma = 0, s = 0` the Gevrey norm is the plain
//! `L^2` norm; `G^{0,s}` is the Sobolev space `H^s`.
//!
//! Weighted sums switch to log-domain accumulation once
//! `sigma * max ||xi||_1 > 500`, and report an overflow error when even that
//! cannot represent the result.

use crate::error::{KgsError, Result};
use crate::spectral::{bracket, ell1, DispersionTag, SpectralField, TorusGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Threshold on `sigma * max ||xi||_1` beyond which sums move to log domain.
const LOG_DOMAIN_THRESHOLD: f64 = 500.0;

/// Weight parameters of the Gevrey norm `G^{sigma,s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevreyParams {
    /// Strip half-width, in units of `x`; must be `>= 0`.
    pub sigma: f64,
    /// Regularity index.
    pub s: f64,
}

impl GevreyParams {
    pub fn new(sigma: f64, s: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(KgsError::Domain(format!("sigma must be >= 0, got {sigma}")));
        }
        if !s.is_finite() {
            return Err(KgsError::Domain(format!("s must be finite, got {s}")));
        }
        Ok(Self { sigma, s })
    }
}

/// Weight parameters of the Bourgain norm `X^{sigma,s,b}_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BourgainParams {
    pub sigma: f64,
    pub s: f64,
    pub b: f64,
    pub h: DispersionTag,
}

/// A field on a `(xi, tau)` frequency lattice: spatial modes of a
/// [`TorusGrid`] crossed with `m_t` temporal modes `tau_j = j * 2 pi / T_w`.
///
/// Coefficients are stored row major with the temporal index fastest, both
/// axes in FFT (signed wrap-around) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: TorusGrid,
    m_t: usize,
    t_window: f64,
    coeffs: Vec<Complex64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: TorusGrid, m_t: usize, t_window: f64) -> Result<Self> {
        if m_t < 2 || !m_t.is_power_of_two() {
            return Err(KgsError::Domain(format!(
                "temporal mode count must be a power of two >= 2, got {m_t}"
            )));
        }
        if !(t_window > 0.0 && t_window.is_finite()) {
            return Err(KgsError::Domain(format!(
                "time window must be positive, got {t_window}"
            )));
        }
        Ok(Self {
            grid,
            m_t,
            t_window,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.total_modes() * m_t],
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn temporal_modes(&self) -> usize {
        self.m_t
    }

    pub fn time_window(&self) -> f64 {
        self.t_window
    }

    /// Temporal frequency spacing `2 pi / T_w`.
    pub fn tau_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.t_window
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn total_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// Signed temporal index of a flat position.
    pub fn split_flat(&self, flat: usize) -> (usize, i64) {
        let spatial = flat / self.m_t;
        let jt = flat % self.m_t;
        (spatial, signed_wrap(jt, self.m_t))
    }

    pub fn flat_of(&self, k: &[i64], j: i64) -> Option<usize> {
        let spatial = self.grid.flat_index(k)?;
        let m = self.m_t as i64;
        if j < -m / 2 || j >= m / 2 {
            return None;
        }
        let jt = if j >= 0 { j } else { j + m } as usize;
        Some(spatial * self.m_t + jt)
    }

    pub fn coeff_at(&self, k: &[i64], j: i64) -> Complex64 {
        self.flat_of(k, j)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn set_coeff(&mut self, k: &[i64], j: i64, value: Complex64) {
        if let Some(i) = self.flat_of(k, j) {
            self.coeffs[i] = value;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= alpha;
        }
        out
    }

    /// The conjugate field: `conj_hat(tau, xi) = conj(hat(-tau, -xi))`.
    pub fn conjugate(&self) -> Self {
        let mut out = Self::zeros(self.grid, self.m_t, self.t_window).unwrap();
        let n = self.grid.points_per_axis() as i64;
        let m = self.m_t as i64;
        let dim = self.grid.dim();
        let mut neg = [0i64; 3];
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let (spatial, j) = self.split_flat(flat);
            let k = self.grid.signed_index(spatial);
            if j == -m / 2 || (0..dim).any(|a| k[a] == -n / 2) {
                continue;
            }
            for a in 0..dim {
                neg[a] = -k[a];
            }
            if let Some(i) = self.flat_of(&neg[..dim], -j) {
                out.coeffs[i] = c.conj();
            }
        }
        out
    }

    /// Multiply every mode by `e^{sigma ||xi||_1}` (spatial weight only).
    pub fn ell1_weight(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        for spatial in 0..self.grid.total_modes() {
            let xi = self.grid.frequency(spatial);
            let w = (sigma * ell1(&xi)).exp();
            for jt in 0..self.m_t {
                out.coeffs[spatial * self.m_t + jt] *= w;
            }
        }
        out
    }

    /// Replace every coefficient by its modulus (used by reduction probes).
    pub fn abs_coeffs(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c = Complex64::new(c.norm(), 0.0);
        }
        out
    }
}

pub(crate) fn signed_wrap(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Gevrey norm `||f||_{G^{sigma,s}}` of a spectral field.
pub fn gevrey_norm(f: &SpectralField, p: &GevreyParams) -> Result<f64> {
    if p.sigma < 0.0 {
        return Err(KgsError::Domain(format!("sigma must be >= 0, got {}", p.sigma)));
    }
    let grid = *f.grid();
    let log_domain = p.sigma * grid.max_ell1_frequency() > LOG_DOMAIN_THRESHOLD;

    // Log of the weighted magnitude, 2*(sigma ||xi|| + s ln<xi>) + 2 ln|c|.
    let log_term = |flat: usize, c: &Complex64| -> Option<f64> {
        let m = c.norm();
        if m == 0.0 {
            return None;
        }
        let xi = grid.frequency(flat);
        Some(2.0 * (p.sigma * ell1(&xi) + p.s * bracket(&xi).ln() + m.ln()))
    };

    let log_sum_exp = || -> f64 {
        let mut max_log = f64::NEG_INFINITY;
        for (flat, c) in f.coeffs().iter().enumerate() {
            if let Some(lt) = log_term(flat, c) {
                max_log = max_log.max(lt);
            }
        }
        if max_log == f64::NEG_INFINITY {
            return 0.0;
        }
        let mut acc = 0.0f64;
        for (flat, c) in f.coeffs().iter().enumerate() {
            if let Some(lt) = log_term(flat, c) {
                acc += (lt - max_log).exp();
            }
        }
        (0.5 * (max_log + acc.ln())).exp()
    };

    let norm = if log_domain {
        log_sum_exp()
    } else {
        let mut acc = 0.0f64;
        for (flat, c) in f.coeffs().iter().enumerate() {
            let sq = c.norm_sqr();
            if sq == 0.0 {
                continue;
            }
            let xi = grid.frequency(flat);
            let w = (2.0 * (p.sigma * ell1(&xi) + p.s * bracket(&xi).ln())).exp();
            acc += w * sq;
        }
        let linear = acc.sqrt();
        // Squared-domain accumulation overflows before the norm itself does.
        if linear.is_finite() { linear } else { log_sum_exp() }
    };

    if !norm.is_finite() {
        return Err(KgsError::Overflow {
            context: format!("gevrey_norm(sigma={}, s={})", p.sigma, p.s),
            advice: "reduce sigma or the grid size N".into(),
        });
    }
    Ok(norm)
}

/// Sharp constant of the embedding `G^{sigma,s} subset G^{sigma',s'}` on a
/// grid: the supremum over lattice frequencies of
/// `e^{(sigma'-sigma)||xi||_1} <xi>^{s'-s}`.
///
/// Requires `0 <= sigma' < sigma`; then
/// `||f||_{G^{sigma',s'}} <= C ||f||_{G^{sigma,s}}` for every field on the
/// grid.
pub fn embedding_constant(
    sigma: f64,
    sigma_prime: f64,
    s: f64,
    s_prime: f64,
    grid: &TorusGrid,
) -> Result<f64> {
    if !(0.0 <= sigma_prime && sigma_prime < sigma) {
        return Err(KgsError::Domain(format!(
            "embedding requires 0 <= sigma' < sigma, got sigma'={sigma_prime}, sigma={sigma}"
        )));
    }
    let mut sup = 0.0f64;
    for flat in 0..grid.total_modes() {
        let xi = grid.frequency(flat);
        let log_w = (sigma_prime - sigma) * ell1(&xi) + (s_prime - s) * bracket(&xi).ln();
        sup = sup.max(log_w.exp());
    }
    Ok(sup)
}

/// Bourgain norm `||F||_{X^{sigma,s,b}_h}` of a space-time field.
pub fn bourgain_norm(field: &SpaceTimeField, p: &BourgainParams) -> Result<f64> {
    let grid = *field.grid();
    let dims: Vec<usize> = grid
        .dims()
        .into_iter()
        .chain(std::iter::once(field.temporal_modes()))
        .collect();
    lattice_bourgain_norm(
        field.coeffs(),
        &dims,
        grid.dim(),
        grid.length_scale(),
        field.tau_spacing(),
        p,
    )
}

/// Bourgain norm on a raw frequency lattice with arbitrary axis sizes.
///
/// `dims` lists the spatial axis sizes followed by the temporal size; each
/// axis is in FFT (signed wrap-around) order. Spatial frequencies are
/// `k/length_scale`, temporal are `j * tau_spacing`. Shared by
/// [`bourgain_norm`] and the zero-padded product lattices of the probes.
pub fn lattice_bourgain_norm(
    coeffs: &[Complex64],
    dims: &[usize],
    spatial_dim: usize,
    length_scale: f64,
    tau_spacing: f64,
    p: &BourgainParams,
) -> Result<f64> {
    assert_eq!(dims.len(), spatial_dim + 1);
    let m_t = dims[spatial_dim];
    let spatial_total: usize = dims[..spatial_dim].iter().product();
    assert_eq!(coeffs.len(), spatial_total * m_t);
    if p.sigma < 0.0 {
        return Err(KgsError::Domain(format!("sigma must be >= 0, got {}", p.sigma)));
    }

    // Per-spatial-mode tables: 2*(sigma ||xi||_1 + s ln<xi>) and h(xi).
    let mut spatial_log_w = Vec::with_capacity(spatial_total);
    let mut spatial_h = Vec::with_capacity(spatial_total);
    let mut max_ell1: f64 = 0.0;
    for flat in 0..spatial_total {
        let mut rem = flat;
        let mut xi = [0.0f64; 3];
        for a in (0..spatial_dim).rev() {
            let i = rem % dims[a];
            rem /= dims[a];
            xi[a] = signed_wrap(i, dims[a]) as f64 / length_scale;
        }
        max_ell1 = max_ell1.max(ell1(&xi));
        spatial_log_w.push(2.0 * (p.sigma * ell1(&xi) + p.s * bracket(&xi).ln()));
        spatial_h.push(p.h.h(&xi));
    }
    let log_domain = p.sigma * max_ell1 > LOG_DOMAIN_THRESHOLD;

    // Log of the weighted term with coefficient magnitude, not its square,
    // so subnormal coefficients survive.
    let log_term = |spatial: usize, jt: usize, m: f64| -> f64 {
        let tau = signed_wrap(jt, m_t) as f64 * tau_spacing;
        let modulation = 1.0 + (tau - spatial_h[spatial]).powi(2);
        spatial_log_w[spatial] + p.b * modulation.ln() + 2.0 * m.ln()
    };

    let log_sum_exp = || -> f64 {
        let mut max_log = f64::NEG_INFINITY;
        for spatial in 0..spatial_total {
            for jt in 0..m_t {
                let m = coeffs[spatial * m_t + jt].norm();
                if m > 0.0 {
                    max_log = max_log.max(log_term(spatial, jt, m));
                }
            }
        }
        if max_log == f64::NEG_INFINITY {
            return 0.0;
        }
        let mut acc = 0.0f64;
        for spatial in 0..spatial_total {
            for jt in 0..m_t {
                let m = coeffs[spatial * m_t + jt].norm();
                if m > 0.0 {
                    acc += (log_term(spatial, jt, m) - max_log).exp();
                }
            }
        }
        (0.5 * (max_log + acc.ln())).exp()
    };

    let norm = if log_domain {
        log_sum_exp()
    } else {
        let mut acc = 0.0f64;
        for spatial in 0..spatial_total {
            let lw = spatial_log_w[spatial];
            let h = spatial_h[spatial];
            for jt in 0..m_t {
                let sq = coeffs[spatial * m_t + jt].norm_sqr();
                if sq == 0.0 {
                    continue;
                }
                let tau = signed_wrap(jt, m_t) as f64 * tau_spacing;
                let modulation = 1.0 + (tau - h).powi(2);
                acc += (lw + p.b * modulation.ln()).exp() * sq;
            }
        }
        let linear = acc.sqrt();
        if linear.is_finite() { linear } else { log_sum_exp() }
    };

    if !norm.is_finite() {
        return Err(KgsError::Overflow {
            context: format!("bourgain_norm(sigma={}, s={}, b={})", p.sigma, p.s, p.b),
            advice: "reduce sigma or the lattice cutoffs".into(),
        });
    }
    Ok(norm)
}
