//! The Klein-Gordon-Schrodinger system in first-order form, its right-hand
//! side, the Gevrey commutator operator, and analytic initial data with a
//! planted radius.
//!
//! The second-order meson equation `n_tt + (1 - Lap) n = |u|^2` (meson mass
//! normalized to 1) splits via `n_pm = n +/- i <D>^{-1} n_t` into the
//! first-order system
//!
//! ```text
//! du/dt    = i ( Lap u + u (n_+ + n_-)/2 )
//! dn_+/dt  = -i <D> n_+ + i <D>^{-1} |u|^2
//! dn_-/dt  = +i <D> n_- - i <D>^{-1} |u|^2
//! ```
//!
//! Real `(n, n_t)` corresponds spectrally to the conjugate-pair invariant
//! `n_-(k) = conj(n_+(-k))`, which the flow preserves.

use crate::error::{KgsError, Result};
use crate::spectral::{
    apply_multiplier, dealiased_product, ell1, modulus_squared, MultiplierSymbol, SpectralField,
    TorusGrid,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// State of the first-order system at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct KgsState {
    pub u: SpectralField,
    pub n_plus: SpectralField,
    pub n_minus: SpectralField,
    pub t: f64,
}

impl KgsState {
    pub fn new(u: SpectralField, n_plus: SpectralField, n_minus: SpectralField, t: f64) -> Result<Self> {
        if u.grid() != n_plus.grid() || u.grid() != n_minus.grid() {
            return Err(KgsError::GridMismatch(
                "u, n_plus, n_minus must share one grid".into(),
            ));
        }
        Ok(Self { u, n_plus, n_minus, t })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.u.grid()
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            u: SpectralField::zeros(grid),
            n_plus: SpectralField::zeros(grid),
            n_minus: SpectralField::zeros(grid),
            t: 0.0,
        }
    }

    /// Largest deviation from the conjugate-pair invariant
    /// `n_-(k) = conj(n_+(-k))`, relative to the largest `n_+` magnitude.
    pub fn conjugate_pair_deviation(&self) -> f64 {
        let reflected = self.n_plus.conjugate();
        let scale = self
            .n_plus
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        self.n_minus
            .coeffs()
            .iter()
            .zip(reflected.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max)
            / scale
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.n_plus, &self.n_minus].iter().all(|f| {
            f.coeffs()
                .iter()
                .all(|c| c.re.is_finite() && c.im.is_finite())
        })
    }
}

/// Time derivative of a [`KgsState`].
#[derive(Debug, Clone)]
pub struct KgsDerivative {
    pub du: SpectralField,
    pub dn_plus: SpectralField,
    pub dn_minus: SpectralField,
}

/// Map real `(n, n_t)` to the half-wave pair `n_pm = n +/- i <D>^{-1} n_t`.
pub fn to_first_order(
    n: &SpectralField,
    nt: &SpectralField,
) -> Result<(SpectralField, SpectralField)> {
    if n.grid() != nt.grid() {
        return Err(KgsError::GridMismatch("n and n_t grids differ".into()));
    }
    let correction = apply_multiplier(nt, &MultiplierSymbol::InverseBracket)?;
    let i = Complex64::new(0.0, 1.0);
    let mut n_plus = n.clone();
    n_plus.axpy(i, &correction)?;
    let mut n_minus = n.clone();
    n_minus.axpy(-i, &correction)?;
    n_plus.set_real(false);
    n_minus.set_real(false);
    Ok((n_plus, n_minus))
}

/// Invert [`to_first_order`]: `n = (n_+ + n_-)/2`, `n_t = <D>(n_+ - n_-)/(2i)`.
pub fn from_first_order(
    n_plus: &SpectralField,
    n_minus: &SpectralField,
) -> Result<(SpectralField, SpectralField)> {
    if n_plus.grid() != n_minus.grid() {
        return Err(KgsError::GridMismatch("n_+ and n_- grids differ".into()));
    }
    let half = Complex64::new(0.5, 0.0);
    let mut n = n_plus.add(n_minus)?.scale(half);
    let diff = n_plus.sub(n_minus)?;
    let mut nt = apply_multiplier(&diff, &MultiplierSymbol::BracketPower { s: 1.0 })?
        .scale(Complex64::new(0.0, -0.5));
    let real = n.hermitian_deviation() < 1e-10 && nt.hermitian_deviation() < 1e-10;
    n.set_real(real);
    nt.set_real(real);
    Ok((n, nt))
}

/// Right-hand side of the first-order system, with both nonlinearities
/// evaluated through dealiased products.
pub fn rhs(state: &KgsState) -> Result<KgsDerivative> {
    let i = Complex64::new(0.0, 1.0);

    // u (n_+ + n_-)/2
    let n_avg = state.n_plus.add(&state.n_minus)?.scale(Complex64::new(0.5, 0.0));
    let coupling = dealiased_product(&state.u, &n_avg)?;

    // Lap u has symbol -|xi|^2 = 1 - <xi>^2.
    let lap_u = {
        let mut out = state.u.clone();
        let grid = *state.u.grid();
        for (flat, c) in out.coeffs_mut().iter_mut().enumerate() {
            let xi = grid.frequency(flat);
            *c *= -crate::spectral::norm_sq(&xi);
        }
        out
    };
    let mut du = lap_u.add(&coupling)?.scale(i);
    du.set_real(false);

    // Source <D>^{-1} |u|^2 feeds the two halves with opposite signs.
    let source = apply_multiplier(&modulus_squared(&state.u)?, &MultiplierSymbol::InverseBracket)?;
    let bracket_plus = apply_multiplier(&state.n_plus, &MultiplierSymbol::BracketPower { s: 1.0 })?;
    let bracket_minus = apply_multiplier(&state.n_minus, &MultiplierSymbol::BracketPower { s: 1.0 })?;

    let mut dn_plus = bracket_plus.scale(-i);
    dn_plus.axpy(i, &source)?;
    let mut dn_minus = bracket_minus.scale(i);
    dn_minus.axpy(-i, &source)?;

    Ok(KgsDerivative { du, dn_plus, dn_minus })
}

/// The Gevrey commutator `F(v, m) = v m - e^{sigma ||D||} ( m e^{-sigma ||D||} v )`,
/// evaluated with dealiased products. Identically zero at `sigma = 0`, and
/// zero whenever `m` is constant.
pub fn commutator_f(v: &SpectralField, m: &SpectralField, sigma: f64) -> Result<SpectralField> {
    if v.grid() != m.grid() {
        return Err(KgsError::GridMismatch("v and m grids differ".into()));
    }
    if sigma < 0.0 {
        return Err(KgsError::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    let direct = dealiased_product(v, m)?;
    let damped = apply_multiplier(v, &MultiplierSymbol::Ell1Exp { sigma: -sigma })?;
    let product = dealiased_product(&damped, m)?;
    let lifted = apply_multiplier(&product, &MultiplierSymbol::Ell1Exp { sigma })?;
    direct.sub(&lifted)
}

/// Spectral amplitude shapes for planted initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumShape {
    /// `|hat(f)(xi)| = A e^{-sigma0 ||xi||_1}`: the planted radius is exact.
    Ell1Exponential,
    /// `|hat(f)(xi)| = A e^{-sigma0 ||xi||_1} / (1 + |xi|^2)`: same radius with
    /// a squared-Lorentzian prefactor.
    SquaredLorentzian,
}

/// Recipe for analytic initial data `(u_0, phi_+, phi_-)` with a planted
/// radius of analyticity `sigma0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    /// Planted strip half-width; must be positive.
    pub sigma0: f64,
    /// Amplitude of `u_0`.
    pub amp_u: f64,
    /// Amplitude of `n(0)`.
    pub amp_n0: f64,
    /// Amplitude of `n_t(0)`.
    pub amp_n1: f64,
    pub shape: SpectrumShape,
    /// Seed for the random phases.
    pub seed: u64,
}

impl InitialDataSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(KgsError::Domain(format!(
                "planted radius sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        for (name, a) in [
            ("amp_u", self.amp_u),
            ("amp_n0", self.amp_n0),
            ("amp_n1", self.amp_n1),
        ] {
            if !a.is_finite() {
                return Err(KgsError::Domain(format!("{name} must be finite, got {a}")));
            }
        }
        Ok(())
    }
}

/// Generate `(u_0, phi_+, phi_-)` from a spec.
///
/// Moduli follow the requested shape exactly; phases are uniform from the
/// seed. `(n, n_t)` are built real (Hermitian-symmetric) and mapped through
/// [`to_first_order`]. All spectra are truncated at the dealiasing cutoff so
/// that products stay alias-free from `t = 0` on.
pub fn make_initial_data(
    spec: &InitialDataSpec,
    grid: TorusGrid,
) -> Result<(SpectralField, SpectralField, SpectralField)> {
    spec.validate()?;
    let decay_arg = spec.sigma0 * grid.max_ell1_frequency();
    if decay_arg > 500.0 {
        return Err(KgsError::Domain(format!(
            "sigma0 * N/(2L) = {decay_arg} is not representable; reduce sigma0 or N"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shape = |xi: &[f64; 3]| -> f64 {
        let decay = (-spec.sigma0 * ell1(xi)).exp();
        match spec.shape {
            SpectrumShape::Ell1Exponential => decay,
            SpectrumShape::SquaredLorentzian => decay / (1.0 + crate::spectral::norm_sq(xi)),
        }
    };

    let cutoff = grid.dealias_cutoff();
    let total = grid.total_modes();
    let in_band = |k: &[i64; 3]| (0..grid.dim()).all(|a| k[a].abs() <= cutoff);

    // u_0: free phases on every retained mode.
    let mut u0 = SpectralField::zeros(grid);
    u0.set_real(false);
    for flat in 0..total {
        let k = grid.signed_index(flat);
        let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        if !in_band(&k) {
            continue;
        }
        let xi = grid.frequency(flat);
        u0.coeffs_mut()[flat] =
            spec.amp_u * shape(&xi) * Complex64::new(phase.cos(), phase.sin());
    }

    // Real (n_0, n_1): fill one representative per mirror pair.
    let mut n0 = SpectralField::zeros(grid);
    let mut n1 = SpectralField::zeros(grid);
    let n = grid.points_per_axis() as i64;
    for flat in 0..total {
        let k = grid.signed_index(flat);
        let phase0: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let phase1: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        if !in_band(&k) || (0..grid.dim()).any(|a| k[a] == -n / 2) {
            continue;
        }
        let neg: Vec<i64> = (0..grid.dim()).map(|a| -k[a]).collect();
        let mirror = grid.flat_index(&neg).unwrap();
        if mirror < flat {
            continue; // handled from the representative
        }
        let xi = grid.frequency(flat);
        let self_conjugate = mirror == flat;
        for (field, amp, phase) in [(&mut n0, spec.amp_n0, phase0), (&mut n1, spec.amp_n1, phase1)] {
            let value = if self_conjugate {
                Complex64::new(amp * shape(&xi), 0.0)
            } else {
                amp * shape(&xi) * Complex64::new(phase.cos(), phase.sin())
            };
            field.coeffs_mut()[flat] = value;
            field.coeffs_mut()[mirror] = value.conj();
        }
    }
    n0.set_real(true);
    n1.set_real(true);

    let (phi_plus, phi_minus) = to_first_order(&n0, &n1)?;
    Ok((u0, phi_plus, phi_minus))
}
