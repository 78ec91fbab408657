//! Numerical probes of the bilinear and commutator estimates, the resonance
//! identity, dyadic decompositions, and the convolution-integral bound.
//!
//! Space-time products are computed as exact zero-padded convolutions of the
//! coefficient lattices (`(fg)^(kappa) = sum f(kappa1) g(kappa - kappa1)`,
//! no extra normalization: constant factors drop out of every ratio
//! statistic). Probe lattices use `L = 1` and `T_w = 2 pi`, so frequencies
//! are plain integers.

use crate::error::{KgsError, Result};
use crate::fft::{fft_nd, good_fft_size};
use crate::gevrey::{bourgain_norm, lattice_bourgain_norm, signed_wrap, BourgainParams, SpaceTimeField};
use crate::spectral::{DispersionTag, TorusGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Which estimate a ratio probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateTag {
    /// `||fg||_{X^{sigma,0,b'-1}} <= C ||f||_{X^{sigma,0,b}} ||g||_{X^{sigma,s,b}_pm}`
    Estimate1,
    /// `||f conj(g)||_{X_pm^{sigma,-s,b'-1}} <= C ||f||_{X^{sigma,0,b}} ||g||_{X^{sigma,0,b}}`
    Estimate2,
    /// `||conj(F(v,m))||_{X^{0,b'-1}} <= C sigma ||v||_{X^{0,b}} ||m||_{X^{sigma,1,b}_pm}`
    Commutator,
}

impl std::fmt::Display for EstimateTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateTag::Estimate1 => write!(f, "estimate1"),
            EstimateTag::Estimate2 => write!(f, "estimate2"),
            EstimateTag::Commutator => write!(f, "commutator"),
        }
    }
}

/// Sign branch of the resonance function: `Minus` uses
/// `B = cos(a12) + (|xi2| - 1)/(2 |xi1|)` (the `X_+` pairing), `Plus` the
/// `+1` variant (`X_-`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignBranch {
    Plus,
    Minus,
}

impl SignBranch {
    fn value(&self) -> f64 {
        match self {
            SignBranch::Plus => 1.0,
            SignBranch::Minus => -1.0,
        }
    }
}

/// A generated probe pair with its generation parameters.
#[derive(Debug, Clone)]
pub struct ProbeSample {
    pub f: SpaceTimeField,
    pub g: SpaceTimeField,
    pub cutoff_xi: usize,
    pub cutoff_tau: usize,
    pub seed: u64,
}

impl ProbeSample {
    /// Draw a seeded pair of band-limited fields (`g` uses `seed + 1` of the
    /// derived stream).
    pub fn generate(dim: usize, cutoff_xi: usize, cutoff_tau: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            f: sample_field(dim, cutoff_xi, cutoff_tau, seed)?,
            g: sample_field(dim, cutoff_xi, cutoff_tau, seed.wrapping_add(1))?,
            cutoff_xi,
            cutoff_tau,
            seed,
        })
    }
}

/// One measured estimate ratio.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRecord {
    pub tag: EstimateTag,
    pub sigma: f64,
    pub s: f64,
    pub b: f64,
    pub b_prime: f64,
    pub dim: usize,
    pub sign: DispersionTag,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
    pub cutoff: usize,
    pub seed: u64,
}

/// Random band-limited space-time field: i.i.d. unit-variance complex
/// Gaussians inside `|k_a| <= cutoff_xi`, `|j| <= cutoff_tau`, zero outside.
pub fn sample_field(
    dim: usize,
    cutoff_xi: usize,
    cutoff_tau: usize,
    seed: u64,
) -> Result<SpaceTimeField> {
    let n = pow2_at_least(2 * (cutoff_xi + 1)).max(8);
    let m_t = pow2_at_least(2 * (cutoff_tau + 1)).max(2);
    let grid = TorusGrid::new(dim, n, 1.0)?;
    let mut field = SpaceTimeField::zeros(grid, m_t, 2.0 * std::f64::consts::PI)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = field.total_modes();
    let root_half = std::f64::consts::FRAC_1_SQRT_2;
    for flat in 0..total {
        let (spatial, j) = field.split_flat(flat);
        let k = grid.signed_index(spatial);
        let in_box = (0..dim).all(|a| k[a].unsigned_abs() as usize <= cutoff_xi)
            && j.unsigned_abs() as usize <= cutoff_tau;
        if !in_box {
            continue;
        }
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        field.coeffs_mut()[flat] = Complex64::new(re, im) * root_half;
    }
    Ok(field)
}

fn pow2_at_least(x: usize) -> usize {
    x.next_power_of_two()
}

/// A product lattice: convolution output with arbitrary axis sizes.
#[derive(Debug, Clone)]
pub struct ProductLattice {
    /// Spatial axis sizes followed by the temporal size, FFT order each.
    pub dims: Vec<usize>,
    pub spatial_dim: usize,
    pub length_scale: f64,
    pub tau_spacing: f64,
    pub coeffs: Vec<Complex64>,
}

impl ProductLattice {
    pub fn norm(&self, p: &BourgainParams) -> Result<f64> {
        lattice_bourgain_norm(
            &self.coeffs,
            &self.dims,
            self.spatial_dim,
            self.length_scale,
            self.tau_spacing,
            p,
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(KgsError::GridMismatch("product lattices differ".into()));
        }
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *c -= o;
        }
        Ok(out)
    }

    /// Multiply every mode by `e^{sigma ||xi||_1}`.
    pub fn ell1_weight(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        let m_t = self.dims[self.spatial_dim];
        let spatial_total: usize = self.dims[..self.spatial_dim].iter().product();
        for spatial in 0..spatial_total {
            let mut rem = spatial;
            let mut ell1 = 0.0;
            for a in (0..self.spatial_dim).rev() {
                let i = rem % self.dims[a];
                rem /= self.dims[a];
                ell1 += (signed_wrap(i, self.dims[a]) as f64 / self.length_scale).abs();
            }
            let w = (sigma * ell1).exp();
            for jt in 0..m_t {
                out.coeffs[spatial * m_t + jt] *= w;
            }
        }
        out
    }

    /// `conj_hat(kappa) = conj(hat(-kappa))` on all axes.
    pub fn conjugate(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c = Complex64::new(0.0, 0.0);
        }
        let rank = self.dims.len();
        let mut idx = [0i64; 4];
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut rem = flat;
            for a in (0..rank).rev() {
                let i = rem % self.dims[a];
                rem /= self.dims[a];
                idx[a] = signed_wrap(i, self.dims[a]);
            }
            let mut target = 0usize;
            let mut ok = true;
            for (a, &signed) in idx.iter().enumerate().take(rank) {
                let neg = -signed;
                let half = self.dims[a] as i64;
                if neg < -(half / 2) || neg >= (half + 1) / 2 {
                    ok = false;
                    break;
                }
                let i = if neg >= 0 { neg } else { neg + half } as usize;
                target = target * self.dims[a] + i;
            }
            if ok {
                out.coeffs[target] = c.conj();
            }
        }
        out
    }
}

/// Signed support bounds per axis (spatial axes then temporal), or `None`
/// for an all-zero field.
fn support_bounds(f: &SpaceTimeField) -> Option<Vec<(i64, i64)>> {
    let grid = f.grid();
    let rank = grid.dim() + 1;
    let mut lo = vec![i64::MAX; rank];
    let mut hi = vec![i64::MIN; rank];
    let mut any = false;
    for (flat, c) in f.coeffs().iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        any = true;
        let (spatial, j) = f.split_flat(flat);
        let k = grid.signed_index(spatial);
        for a in 0..grid.dim() {
            lo[a] = lo[a].min(k[a]);
            hi[a] = hi[a].max(k[a]);
        }
        lo[rank - 1] = lo[rank - 1].min(j);
        hi[rank - 1] = hi[rank - 1].max(j);
    }
    any.then(|| lo.into_iter().zip(hi).collect())
}

/// Exact zero-padded convolution of two space-time coefficient lattices,
/// via FFT on 5-smooth padded sizes.
pub fn convolve(f: &SpaceTimeField, g: &SpaceTimeField) -> Result<ProductLattice> {
    convolve_impl(f, g, false)
}

/// Coefficients of `f * conj(g)` (the conjugate reflects the lattice:
/// `conj_hat(kappa) = conj(hat(-kappa))`), computed as a cross-correlation
/// so the conjugate field is never materialized.
pub fn convolve_conj(f: &SpaceTimeField, g: &SpaceTimeField) -> Result<ProductLattice> {
    convolve_impl(f, g, true)
}

fn convolve_impl(f: &SpaceTimeField, g: &SpaceTimeField, conj_g: bool) -> Result<ProductLattice> {
    if f.grid() != g.grid() || f.temporal_modes() != g.temporal_modes() {
        return Err(KgsError::GridMismatch("probe pair lattices differ".into()));
    }
    let rank = f.grid().dim() + 1;
    let (bf, bg) = match (support_bounds(f), support_bounds(g)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            // Convolution with an all-zero field: a 1-point zero lattice.
            return Ok(ProductLattice {
                dims: vec![1; rank],
                spatial_dim: rank - 1,
                length_scale: f.grid().length_scale(),
                tau_spacing: f.tau_spacing(),
                coeffs: vec![Complex64::new(0.0, 0.0)],
            });
        }
    };

    // The padded signed range must cover the output support
    // [lo_f + lo_g, hi_f + hi_g] so wrapped positions read back correctly.
    // Conjugation reflects g's support.
    let padded: Vec<usize> = (0..rank)
        .map(|a| {
            let (g_lo, g_hi) = if conj_g { (-bg[a].1, -bg[a].0) } else { bg[a] };
            let lo = bf[a].0 + g_lo;
            let hi = bf[a].1 + g_hi;
            let max_abs = lo.unsigned_abs().max(hi.unsigned_abs()) as usize;
            good_fft_size(2 * max_abs + 2)
        })
        .collect();
    let total: usize = padded.iter().product();

    let embed = |field: &SpaceTimeField| -> Vec<Complex64> {
        let grid = field.grid();
        let mut out = vec![Complex64::new(0.0, 0.0); total];
        for (flat, c) in field.coeffs().iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let (spatial, j) = field.split_flat(flat);
            let k = grid.signed_index(spatial);
            let mut target = 0usize;
            for a in 0..rank {
                let s = if a < rank - 1 { k[a] } else { j };
                let p = padded[a] as i64;
                let i = s.rem_euclid(p) as usize;
                target = target * padded[a] + i;
            }
            out[target] = *c;
        }
        out
    };

    let mut fa = embed(f);
    let mut gb = embed(g);
    fft_nd(&mut fa, &padded, false);
    fft_nd(&mut gb, &padded, false);
    if conj_g {
        // DFT of the reflected conjugate is the plain conjugate spectrum.
        for (x, y) in fa.iter_mut().zip(gb.iter()) {
            *x *= y.conj();
        }
    } else {
        for (x, y) in fa.iter_mut().zip(gb.iter()) {
            *x *= y;
        }
    }
    fft_nd(&mut fa, &padded, true);
    let scale = 1.0 / total as f64;
    for x in &mut fa {
        *x *= scale;
    }

    Ok(ProductLattice {
        dims: padded,
        spatial_dim: rank - 1,
        length_scale: f.grid().length_scale(),
        tau_spacing: f.tau_spacing(),
        coeffs: fa,
    })
}

/// Parameters of a bilinear probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BilinearParams {
    pub sigma: f64,
    pub s: f64,
    pub b: f64,
    pub b_prime: f64,
    /// Which `X_pm` space the wave factor lives in.
    pub sign: DispersionTag,
}

fn require_wave_sign(sign: DispersionTag) -> Result<()> {
    if sign == DispersionTag::Schrodinger {
        return Err(KgsError::Domain(
            "sign must be wave_plus or wave_minus".into(),
        ));
    }
    Ok(())
}

/// Validate the bilinear parameter window
/// `1/2 < b <= b' < min{(6+2s-d)/4, 1, s+1}` (and `sigma > 0`, `s > -1/2`).
pub fn validate_bilinear_window(dim: usize, sigma: f64, s: f64, b: f64, b_prime: f64) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(KgsError::Domain(format!("window requires sigma > 0, got {sigma}")));
    }
    if !(s > -0.5) {
        return Err(KgsError::Domain(format!("window requires s > -1/2, got {s}")));
    }
    if !(b > 0.5) {
        return Err(KgsError::Domain(format!("window requires b > 1/2, got {b}")));
    }
    if !(b <= b_prime) {
        return Err(KgsError::Domain(format!(
            "window requires b <= b', got b={b}, b'={b_prime}"
        )));
    }
    let cap = ((6.0 + 2.0 * s - dim as f64) / 4.0).min(1.0).min(s + 1.0);
    if !(b_prime < cap) {
        return Err(KgsError::Domain(format!(
            "window requires b' < min{{(6+2s-d)/4, 1, s+1}} = {cap}, got b'={b_prime}"
        )));
    }
    Ok(())
}

/// Validate the commutator window `1/2 < b <= b' < min{(6-d)/4, 1}`.
pub fn validate_commutator_window(dim: usize, sigma: f64, b: f64, b_prime: f64) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(KgsError::Domain(format!("window requires sigma > 0, got {sigma}")));
    }
    if !(b > 0.5) {
        return Err(KgsError::Domain(format!("window requires b > 1/2, got {b}")));
    }
    if !(b <= b_prime) {
        return Err(KgsError::Domain(format!(
            "window requires b <= b', got b={b}, b'={b_prime}"
        )));
    }
    let cap = ((6.0 - dim as f64) / 4.0).min(1.0);
    if !(b_prime < cap) {
        return Err(KgsError::Domain(format!(
            "window requires b' < min{{(6-d)/4, 1}} = {cap}, got b'={b_prime}"
        )));
    }
    Ok(())
}

/// Measure one bilinear ratio. The parameter window is *not* enforced here
/// (campaigns may explore outside it); `g` must be nonzero.
pub fn bilinear_ratio(
    f: &SpaceTimeField,
    g: &SpaceTimeField,
    tag: EstimateTag,
    params: &BilinearParams,
    cutoff: usize,
    seed: u64,
) -> Result<RatioRecord> {
    require_wave_sign(params.sign)?;
    let dim = f.grid().dim();
    let schrodinger_b = BourgainParams {
        sigma: params.sigma,
        s: 0.0,
        b: params.b,
        h: DispersionTag::Schrodinger,
    };
    let (left, right) = match tag {
        EstimateTag::Estimate1 => {
            let prod = convolve(f, g)?;
            let left = prod.norm(&BourgainParams {
                sigma: params.sigma,
                s: 0.0,
                b: params.b_prime - 1.0,
                h: DispersionTag::Schrodinger,
            })?;
            let rf = bourgain_norm(f, &schrodinger_b)?;
            let rg = bourgain_norm(
                g,
                &BourgainParams {
                    sigma: params.sigma,
                    s: params.s,
                    b: params.b,
                    h: params.sign,
                },
            )?;
            (left, rf * rg)
        }
        EstimateTag::Estimate2 => {
            let prod = convolve_conj(f, g)?;
            let left = prod.norm(&BourgainParams {
                sigma: params.sigma,
                s: -params.s,
                b: params.b_prime - 1.0,
                h: params.sign,
            })?;
            let rf = bourgain_norm(f, &schrodinger_b)?;
            let rg = bourgain_norm(g, &schrodinger_b)?;
            (left, rf * rg)
        }
        EstimateTag::Commutator => {
            return Err(KgsError::Domain(
                "use commutator_ratio for the commutator estimate".into(),
            ))
        }
    };
    if right == 0.0 {
        return Err(KgsError::Domain("degenerate sample: zero right-hand side".into()));
    }
    Ok(RatioRecord {
        tag,
        sigma: params.sigma,
        s: params.s,
        b: params.b,
        b_prime: params.b_prime,
        dim,
        sign: params.sign,
        left,
        right,
        ratio: left / right,
        cutoff,
        seed,
    })
}

/// Measure one commutator ratio
/// `||conj(F(v,m))||_{X^{0,b'-1}} / (sigma ||v||_{X^{0,b}} ||m||_{X^{sigma,1,b}_pm})`.
#[allow(clippy::too_many_arguments)]
pub fn commutator_ratio(
    v: &SpaceTimeField,
    m: &SpaceTimeField,
    sigma: f64,
    b: f64,
    b_prime: f64,
    sign: DispersionTag,
    cutoff: usize,
    seed: u64,
) -> Result<RatioRecord> {
    require_wave_sign(sign)?;
    if !(sigma > 0.0) {
        return Err(KgsError::Domain(format!("commutator probe needs sigma > 0, got {sigma}")));
    }
    let direct = convolve(v, m)?;
    let damped = v.ell1_weight(-sigma);
    let lifted = convolve(&damped, m)?.ell1_weight(sigma);
    let f_op = direct.sub(&lifted)?;
    let left = f_op.conjugate().norm(&BourgainParams {
        sigma: 0.0,
        s: 0.0,
        b: b_prime - 1.0,
        h: DispersionTag::Schrodinger,
    })?;
    let rv = bourgain_norm(
        v,
        &BourgainParams {
            sigma: 0.0,
            s: 0.0,
            b,
            h: DispersionTag::Schrodinger,
        },
    )?;
    let rm = bourgain_norm(
        m,
        &BourgainParams {
            sigma,
            s: 1.0,
            b,
            h: sign,
        },
    )?;
    let right = sigma * rv * rm;
    if right == 0.0 {
        return Err(KgsError::Domain("degenerate sample: zero right-hand side".into()));
    }
    Ok(RatioRecord {
        tag: EstimateTag::Commutator,
        sigma,
        s: 1.0,
        b,
        b_prime,
        dim: v.grid().dim(),
        sign,
        left,
        right,
        ratio: left / right,
        cutoff,
        seed,
    })
}

/// Resonance function and identity check at one frequency pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResonanceCheck {
    /// `B = cos(a12) + (|xi2| +/- 1)/(2 |xi1|)`.
    pub b: f64,
    /// `|xi1+xi2|^2 - |xi1|^2 +/- |xi2|`.
    pub lhs: f64,
    /// `lhs - 2 |xi1| |xi2| B`; zero in exact arithmetic.
    pub residual: f64,
}

/// Evaluate the resonance function `B` and its defining identity.
pub fn resonance_b(xi1: &[f64; 3], xi2: &[f64; 3], branch: SignBranch) -> Result<ResonanceCheck> {
    let n1 = crate::spectral::norm_sq(xi1).sqrt();
    let n2 = crate::spectral::norm_sq(xi2).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(KgsError::Domain("resonance function needs nonzero frequencies".into()));
    }
    let s = branch.value();
    let dot = xi1[0] * xi2[0] + xi1[1] * xi2[1] + xi1[2] * xi2[2];
    let cos_a = dot / (n1 * n2);
    let b = cos_a + (n2 + s) / (2.0 * n1);
    let sum = [xi1[0] + xi2[0], xi1[1] + xi2[1], xi1[2] + xi2[2]];
    let lhs = crate::spectral::norm_sq(&sum) - n1 * n1 + s * n2;
    let residual = lhs - 2.0 * n1 * n2 * b;
    Ok(ResonanceCheck { b, lhs, residual })
}

/// Maximal modulation of a frequency triple and its resonance lower bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModulationMax {
    /// `max{ |tau0 - |xi0|^2|, |tau1 + |xi1|^2|, |tau2 -/+ |xi2|| }`.
    pub m: f64,
    /// `2 |xi1| |xi2| |B|`; the maximum is at least a third of it.
    pub resonance: f64,
}

/// Evaluate the modulation maximum over a constrained triple
/// (`sum tau = 0`, `sum xi = 0`).
pub fn modulation_max(
    p0: (f64, [f64; 3]),
    p1: (f64, [f64; 3]),
    p2: (f64, [f64; 3]),
    branch: SignBranch,
) -> Result<ModulationMax> {
    let (tau0, xi0) = p0;
    let (tau1, xi1) = p1;
    let (tau2, xi2) = p2;
    let tau_scale = tau0.abs().max(tau1.abs()).max(tau2.abs()).max(1.0);
    if (tau0 + tau1 + tau2).abs() > 1e-9 * tau_scale {
        return Err(KgsError::Domain("tau constraint violated: sum tau != 0".into()));
    }
    let xi_scale = [xi0, xi1, xi2]
        .iter()
        .map(|x| crate::spectral::norm_sq(x).sqrt())
        .fold(1.0f64, f64::max);
    for a in 0..3 {
        if (xi0[a] + xi1[a] + xi2[a]).abs() > 1e-9 * xi_scale {
            return Err(KgsError::Domain("xi constraint violated: sum xi != 0".into()));
        }
    }

    let check = resonance_b(&xi1, &xi2, branch)?;
    let n0_sq = crate::spectral::norm_sq(&xi0);
    let n1_sq = crate::spectral::norm_sq(&xi1);
    let n2 = crate::spectral::norm_sq(&xi2).sqrt();
    let s = branch.value();
    let m = (tau0 - n0_sq)
        .abs()
        .max((tau1 + n1_sq).abs())
        .max((tau2 - s * n2).abs());
    let resonance = (2.0 * (n1_sq).sqrt() * n2 * check.b).abs();
    if m < resonance / 3.0 - 1e-6 * resonance.max(1.0) {
        return Err(KgsError::Domain(format!(
            "inconsistent triple: max modulation {m} below resonance/3 = {}",
            resonance / 3.0
        )));
    }
    Ok(ModulationMax { m, resonance })
}

/// Partition a field into dyadic spatial-frequency shells: `|xi| < 1`, then
/// `|xi| in [2^j, 2^{j+1})`. Shells are support-disjoint and sum back to the
/// field bit for bit.
pub fn dyadic_shells(field: &SpaceTimeField) -> Vec<SpaceTimeField> {
    let grid = *field.grid();
    let m_t = field.temporal_modes();
    let t_w = field.time_window();
    let max_norm = (grid.dim() as f64).sqrt() * grid.points_per_axis() as f64 / 2.0
        / grid.length_scale();
    let shell_count = if max_norm < 1.0 {
        1
    } else {
        2 + max_norm.log2().floor() as usize
    };
    let mut shells: Vec<SpaceTimeField> = (0..shell_count)
        .map(|_| SpaceTimeField::zeros(grid, m_t, t_w).unwrap())
        .collect();
    for (flat, c) in field.coeffs().iter().enumerate() {
        let (spatial, _) = field.split_flat(flat);
        let xi = grid.frequency(spatial);
        let r = crate::spectral::norm_sq(&xi).sqrt();
        let shell = if r < 1.0 { 0 } else { 1 + r.log2().floor() as usize };
        shells[shell].coeffs_mut()[flat] = *c;
    }
    shells
}

/// Result of the convolution-integral probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvolutionBound {
    /// `int dy / (<y-a>^alpha <y-b>^beta)` over the truncated domain plus
    /// the tail estimate.
    pub integral: f64,
    /// `<a-b>^{-beta}`.
    pub bound: f64,
    pub ratio: f64,
    /// The analytic tail correction that was added.
    pub tail: f64,
}

const INTEGRAL_TRUNCATION: f64 = 1e6;

/// Probe of the convolution-integral bound: requires `alpha > 1` and
/// `alpha >= beta >= 0`.
pub fn convolution_integral_bound(alpha: f64, beta: f64, a: f64, b: f64) -> Result<ConvolutionBound> {
    if !(alpha > 1.0) {
        return Err(KgsError::Domain(format!("requires alpha > 1, got alpha = {alpha}")));
    }
    if !(beta >= 0.0 && alpha >= beta) {
        return Err(KgsError::Domain(format!(
            "requires alpha >= beta >= 0, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let integrand = |y: f64| -> f64 {
        (1.0 + (y - a) * (y - a)).powf(-alpha / 2.0) * (1.0 + (y - b) * (y - b)).powf(-beta / 2.0)
    };

    let lo = a.min(b) - INTEGRAL_TRUNCATION;
    let hi = a.max(b) + INTEGRAL_TRUNCATION;
    let mut breaks = vec![lo, hi];
    for center in [a, b] {
        breaks.push(center);
        let mut offset = 1.0;
        while offset <= INTEGRAL_TRUNCATION {
            for side in [-1.0, 1.0] {
                let p = center + side * offset;
                if p > lo && p < hi {
                    breaks.push(p);
                }
            }
            offset *= 2.0;
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();

    let mut integral = 0.0;
    for w in breaks.windows(2) {
        integral += adaptive_panel(&integrand, w[0], w[1], 1e-12, 24);
    }

    // Power-law tails beyond the truncation, around the weighted center.
    let p = alpha + beta;
    let center = (alpha * a + beta * b) / p;
    let tail_hi = (hi - center).powf(1.0 - p) / (p - 1.0);
    let tail_lo = (center - lo).powf(1.0 - p) / (p - 1.0);
    let tail = tail_hi + tail_lo;
    integral += tail;

    let bound = (1.0 + (a - b) * (a - b)).powf(-beta / 2.0);
    Ok(ConvolutionBound {
        integral,
        bound,
        ratio: integral / bound,
        tail,
    })
}

fn adaptive_panel(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, depth: usize) -> f64 {
    let coarse = fixed_gauss(f, lo, hi, 8);
    let fine = fixed_gauss(f, lo, hi, 16);
    if (fine - coarse).abs() <= tol * (1.0 + fine.abs()) || depth == 0 {
        return fine;
    }
    let mid = 0.5 * (lo + hi);
    adaptive_panel(f, lo, mid, tol * 0.5, depth - 1) + adaptive_panel(f, mid, hi, tol * 0.5, depth - 1)
}

fn fixed_gauss(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let (x, w) = crate::evolution::gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    x.iter()
        .zip(w.iter())
        .map(|(xi, wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

/// Campaign configuration: estimate parameters plus sampling controls.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CampaignParams {
    pub dim: usize,
    pub sigma: f64,
    pub s: f64,
    pub b: f64,
    pub b_prime: f64,
    pub sign: DispersionTag,
    pub seed_base: u64,
}

/// Per-cutoff campaign statistics.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignRow {
    pub cutoff: usize,
    pub samples: usize,
    pub skipped: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Max ratio at this cutoff over max ratio at the previous one.
    pub growth_factor: Option<f64>,
}

/// Summary of one seeded campaign over a list of cutoffs.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub tag: EstimateTag,
    pub params: CampaignParams,
    pub rows: Vec<CampaignRow>,
    /// Largest consecutive growth factor.
    pub overall_growth: Option<f64>,
}

/// Run `sample_count` i.i.d. probe samples at each cutoff and summarize the
/// ratio statistics. Samples are parallelized with per-sample seeds and
/// merged in seed order, so results are deterministic.
pub fn ratio_campaign(
    tag: EstimateTag,
    params: &CampaignParams,
    sample_count: usize,
    cutoffs: &[usize],
) -> Result<CampaignSummary> {
    if sample_count < 100 {
        return Err(KgsError::Domain(format!(
            "campaigns need sample_count >= 100, got {sample_count}"
        )));
    }
    if cutoffs.is_empty() {
        return Err(KgsError::Domain("campaign needs at least one cutoff".into()));
    }
    let mut rows: Vec<CampaignRow> = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let ratios: Vec<Option<f64>> = (0..sample_count)
            .into_par_iter()
            .map(|i| -> Result<Option<f64>> {
                let seed_f = sample_seed(params.seed_base, cutoff, i, 0);
                let seed_g = sample_seed(params.seed_base, cutoff, i, 1);
                let f = sample_field(params.dim, cutoff, cutoff, seed_f)?;
                let g = sample_field(params.dim, cutoff, cutoff, seed_g)?;
                let record = match tag {
                    EstimateTag::Commutator => commutator_ratio(
                        &f,
                        &g,
                        params.sigma,
                        params.b,
                        params.b_prime,
                        params.sign,
                        cutoff,
                        seed_f,
                    ),
                    _ => bilinear_ratio(
                        &f,
                        &g,
                        tag,
                        &BilinearParams {
                            sigma: params.sigma,
                            s: params.s,
                            b: params.b,
                            b_prime: params.b_prime,
                            sign: params.sign,
                        },
                        cutoff,
                        seed_f,
                    ),
                };
                match record {
                    Ok(r) => Ok(Some(r.ratio)),
                    Err(KgsError::Domain(msg)) if msg.contains("degenerate") => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut values: Vec<f64> = ratios.iter().filter_map(|r| *r).collect();
        let skipped = sample_count - values.len();
        values.sort_by(|x, y| x.partial_cmp(y).unwrap());
        if values.is_empty() {
            return Err(KgsError::Domain("all samples degenerate".into()));
        }
        let max_ratio = *values.last().unwrap();
        let median_ratio = values[values.len() / 2];
        let growth_factor = rows
            .last()
            .map(|prev: &CampaignRow| max_ratio / prev.max_ratio);
        rows.push(CampaignRow {
            cutoff,
            samples: sample_count,
            skipped,
            max_ratio,
            median_ratio,
            growth_factor,
        });
    }
    let overall_growth = rows
        .iter()
        .filter_map(|r| r.growth_factor)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
    Ok(CampaignSummary {
        tag,
        params: *params,
        rows,
        overall_growth,
    })
}

fn sample_seed(base: u64, cutoff: usize, index: usize, which: u64) -> u64 {
    base.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add((cutoff as u64) << 32)
        .wrapping_add((index as u64) << 1)
        .wrapping_add(which)
}

/// Hand-built near-resonant pair: `f` concentrated on the Schrodinger
/// characteristic near `xi1 = (m1, 0, ..)`, `g` on the wave characteristic
/// near the lattice `xi2` that minimizes `|B|`. Exploratory input for the
/// campaigns; carries no assertion strength.
pub fn near_resonant_pair(
    dim: usize,
    m1: i64,
    spread: i64,
    seed: u64,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    if dim < 2 {
        return Err(KgsError::Domain(
            "near-resonant construction needs dim >= 2 (angle freedom)".into(),
        ));
    }
    if m1 < 2 {
        return Err(KgsError::Domain("m1 must be >= 2".into()));
    }
    let mut xi1 = [0.0f64; 3];
    xi1[0] = m1 as f64;

    // Scan |xi2| <= 2 m1 for the smallest |B| on the minus branch.
    let mut best = [1i64, 0, 0];
    let mut best_b = f64::INFINITY;
    let range = 2 * m1;
    let zmax = if dim == 3 { range } else { 0 };
    for kx in -range..=range {
        for ky in -range..=range {
            for kz in -zmax..=zmax {
                if kx == 0 && ky == 0 && kz == 0 {
                    continue;
                }
                let xi2 = [kx as f64, ky as f64, kz as f64];
                let check = resonance_b(&xi1, &xi2, SignBranch::Minus).unwrap();
                if check.b.abs() < best_b {
                    best_b = check.b.abs();
                    best = [kx, ky, kz];
                }
            }
        }
    }

    let cutoff_xi = (m1 + range + spread) as usize;
    let tau_need = ((m1 + spread) as f64 + 1.0).powi(2) as usize + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pow2_at_least(2 * (cutoff_xi + 1)).max(8);
    let m_t = pow2_at_least(2 * (tau_need + 1)).max(2);
    let grid = TorusGrid::new(dim, n, 1.0)?;
    let mut f = SpaceTimeField::zeros(grid, m_t, 2.0 * std::f64::consts::PI)?;
    let mut g = SpaceTimeField::zeros(grid, m_t, 2.0 * std::f64::consts::PI)?;

    let place = |field: &mut SpaceTimeField, center: [i64; 3], on_wave: bool, rng: &mut ChaCha8Rng| {
        for dx in -spread..=spread {
            for dy in -spread..=spread {
                let k = [center[0] + dx, center[1] + dy, center[2]];
                let xi = [k[0] as f64, k[1] as f64, k[2] as f64];
                let tau = if on_wave {
                    // X_+ characteristic: tau = -|xi|.
                    -crate::spectral::norm_sq(&xi).sqrt().round()
                } else {
                    -crate::spectral::norm_sq(&xi).round()
                };
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                field.set_coeff(&k[..dim], tau as i64, Complex64::new(re, im));
            }
        }
    };
    place(&mut f, [m1, 0, 0], false, &mut rng);
    place(&mut g, best, true, &mut rng);
    Ok((f, g))
}
