//! Time integration of the first-order system: exact linear propagators,
//! Strang splitting, the Duhamel map, a Picard fixed-point solver with
//! measured contraction, and the lifespan formula.
//!
//! The Strang step is `half linear / full nonlinear / half linear`; the
//! linear flow is exact (unimodular multipliers), the nonlinear sub-flow is
//! advanced by one explicit midpoint step with dealiased products, giving a
//! second-order scheme overall.

use crate::error::{KgsError, Result};
use crate::gevrey::{gevrey_norm, GevreyParams};
use crate::model::KgsState;
use crate::spectral::{
    apply_multiplier, dealiased_product, modulus_squared, DispersionTag, MultiplierSymbol,
    SpectralField,
};
use num_complex::Complex64;
use serde::Serialize;

/// Minimum number of uniform panels of the Picard time grid over
/// `[0, delta]`.
pub const PICARD_TIME_PANELS: usize = 64;

/// Upper bound on the Picard panel count.
pub const PICARD_MAX_PANELS: usize = 4096;

/// Target phase advance per panel of the fastest dispersive mode.
const PICARD_PHASE_PER_PANEL: f64 = 0.4;

/// Empirically calibrated constant of the lifespan formula: the largest
/// power-of-two `C` for which, across the calibration family (amplitudes
/// 0.5 to 2 on a 1d, N = 128, L = 4 grid at sigma = 0.15), the Picard
/// contraction factors stay well below the 0.6 bound from iterate 3 on
/// *and* the resulting `delta` stays resolvable by the capped Picard time
/// grid. Recorded in run metadata.
pub const DEFAULT_LIFESPAN_C: f64 = 512.0;

/// Ordered snapshots of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<KgsState>,
    pub dt: f64,
    pub scheme: &'static str,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &KgsState {
        self.snapshots.last().expect("trajectory holds >= 1 snapshot")
    }
}

/// Convergence record of a Picard run.
#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    /// Summed difference norms per iterate: `sup_j ||du||_{G^{sigma,0}} +
    /// sup_j ||dn_+||_{G^{sigma,1}} + sup_j ||dn_-||_{G^{sigma,1}}`, sampled
    /// at the time-grid nodes.
    pub diffs: Vec<f64>,
    /// Ratios of successive difference norms.
    pub contraction: Vec<f64>,
    pub converged: bool,
    pub delta: f64,
    pub sigma: f64,
}

/// Exponent `q = max{4/(4-d), 2}` of the lifespan formula: 2 in dimensions
/// 1 and 2, and 4 in dimension 3.
pub fn lifespan_exponent(dim: usize) -> Result<f64> {
    match dim {
        1 | 2 => Ok(2.0),
        3 => Ok(4.0),
        _ => Err(KgsError::Domain(format!("dimension must be 1..=3, got {dim}"))),
    }
}

/// Lifespan `delta = C (1 + ||u0||_{G^{sigma,0}} + ||phi_+||_{G^{sigma,1}} +
/// ||phi_-||_{G^{sigma,1}})^{-q}`.
pub fn lifespan(
    u0: &SpectralField,
    phi_plus: &SpectralField,
    phi_minus: &SpectralField,
    sigma: f64,
    q: f64,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(KgsError::Domain(format!("lifespan constant must be positive, got {c}")));
    }
    if !(q > 0.0) {
        return Err(KgsError::Domain(format!("lifespan exponent must be positive, got {q}")));
    }
    let g0 = GevreyParams::new(sigma, 0.0)?;
    let g1 = GevreyParams::new(sigma, 1.0)?;
    let base = 1.0
        + gevrey_norm(u0, &g0)?
        + gevrey_norm(phi_plus, &g1)?
        + gevrey_norm(phi_minus, &g1)?;
    Ok(c * base.powf(-q))
}

/// Exact linear flow `e^{-i t |xi|^2}` / `e^{ -/+ i t <xi>}` of a dispersion
/// tag, applied as a unimodular multiplier.
pub fn linear_propagator(f: &SpectralField, tag: DispersionTag, t: f64) -> Result<SpectralField> {
    apply_multiplier(f, &MultiplierSymbol::propagator(tag, t))
}

fn propagate_state(state: &KgsState, t: f64) -> Result<KgsState> {
    Ok(KgsState {
        u: linear_propagator(&state.u, DispersionTag::Schrodinger, t)?,
        n_plus: linear_propagator(&state.n_plus, DispersionTag::WavePlus, t)?,
        n_minus: linear_propagator(&state.n_minus, DispersionTag::WaveMinus, t)?,
        t: state.t,
    })
}

/// Right-hand side of the nonlinear sub-flow alone (no dispersive terms).
fn nonlinear_rhs(state: &KgsState) -> Result<(SpectralField, SpectralField, SpectralField)> {
    let i = Complex64::new(0.0, 1.0);
    let n_avg = state
        .n_plus
        .add(&state.n_minus)?
        .scale(Complex64::new(0.5, 0.0));
    let du = dealiased_product(&state.u, &n_avg)?.scale(i);
    let source =
        apply_multiplier(&modulus_squared(&state.u)?, &MultiplierSymbol::InverseBracket)?;
    let dn_plus = source.scale(i);
    let dn_minus = source.scale(-i);
    Ok((du, dn_plus, dn_minus))
}

fn midpoint_nonlinear(state: &KgsState, dt: f64) -> Result<KgsState> {
    let (du, dp, dm) = nonlinear_rhs(state)?;
    let half = Complex64::new(0.5 * dt, 0.0);
    let mut mid = state.clone();
    mid.u.axpy(half, &du)?;
    mid.n_plus.axpy(half, &dp)?;
    mid.n_minus.axpy(half, &dm)?;

    let (du, dp, dm) = nonlinear_rhs(&mid)?;
    let full = Complex64::new(dt, 0.0);
    let mut out = state.clone();
    out.u.axpy(full, &du)?;
    out.n_plus.axpy(full, &dp)?;
    out.n_minus.axpy(full, &dm)?;
    Ok(out)
}

/// One Strang step of size `dt`.
pub fn strang_step(state: &KgsState, dt: f64) -> Result<KgsState> {
    if !(dt > 0.0) {
        return Err(KgsError::Domain(format!("dt must be positive, got {dt}")));
    }
    let half = propagate_state(state, 0.5 * dt)?;
    let kicked = midpoint_nonlinear(&half, dt)?;
    let mut out = propagate_state(&kicked, 0.5 * dt)?;
    out.t = state.t + dt;
    Ok(out)
}

/// Integrate over `[0, t_final]` (relative to `state0.t`) with fixed `dt`,
/// snapshotting exactly at the requested relative `output_times`.
///
/// Every requested time, and `t_final` itself, must be a multiple of `dt`
/// to within 1e-9 relative.
pub fn evolve(
    state0: &KgsState,
    t_final: f64,
    dt: f64,
    output_times: &[f64],
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(KgsError::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= 0.0) {
        return Err(KgsError::Domain(format!("t_final must be >= 0, got {t_final}")));
    }
    let to_steps = |t: f64| -> Result<usize> {
        let steps = (t / dt).round();
        if (steps * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(KgsError::Domain(format!(
                "time {t} is not a multiple of dt = {dt}"
            )));
        }
        Ok(steps as usize)
    };
    let total_steps = to_steps(t_final)?;
    let mut snapshot_steps = Vec::with_capacity(output_times.len());
    for (i, &tau) in output_times.iter().enumerate() {
        if tau < -1e-12 || tau > t_final * (1.0 + 1e-12) + 1e-12 {
            return Err(KgsError::Domain(format!(
                "output time {tau} outside [0, {t_final}]"
            )));
        }
        if i > 0 && tau <= output_times[i - 1] {
            return Err(KgsError::Domain("output times must be strictly increasing".into()));
        }
        snapshot_steps.push(to_steps(tau)?);
    }

    let t0 = state0.t;
    let mut snapshots = Vec::with_capacity(output_times.len().max(1));
    let mut next = 0usize;
    let mut state = state0.clone();
    if next < snapshot_steps.len() && snapshot_steps[next] == 0 {
        let mut snap = state.clone();
        snap.t = t0 + output_times[next];
        snapshots.push(snap);
        next += 1;
    }

    for step in 0..total_steps {
        state = strang_step(&state, dt)?;
        state.t = t0 + (step + 1) as f64 * dt;
        if !state.is_finite() {
            return Err(KgsError::Divergence {
                step: step + 1,
                time: state.t,
            });
        }
        while next < snapshot_steps.len() && snapshot_steps[next] == step + 1 {
            let mut snap = state.clone();
            snap.t = t0 + output_times[next];
            snapshots.push(snap);
            next += 1;
        }
    }
    if snapshots.is_empty() {
        // No requested times: keep the final state so the trajectory is
        // never empty.
        snapshots.push(state.clone());
    }

    Ok(Trajectory {
        snapshots,
        dt,
        scheme: "strang",
        steps: total_steps,
    })
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Duhamel map `u(t) = e^{t L_h} f - i int_0^t e^{(t-s) L_h} F(s) ds` with the
/// exact propagator inside, by composite Gauss-Legendre quadrature.
///
/// `quad_nodes >= 2` is the requested total node count; panels of 4-point
/// Gauss-Legendre are used, `ceil(quad_nodes/4)` of them.
pub fn duhamel<F>(
    tag: DispersionTag,
    f: &SpectralField,
    forcing: F,
    t: f64,
    quad_nodes: usize,
) -> Result<SpectralField>
where
    F: Fn(f64) -> Result<SpectralField>,
{
    if quad_nodes < 2 {
        return Err(KgsError::Domain(format!(
            "quad_nodes must be >= 2, got {quad_nodes}"
        )));
    }
    if !(t >= 0.0) {
        return Err(KgsError::Domain(format!("duhamel needs t >= 0, got {t}")));
    }
    let mut out = linear_propagator(f, tag, t)?;
    if t == 0.0 {
        return Ok(out);
    }
    let panels = quad_nodes.div_ceil(4);
    let (gx, gw) = gauss_legendre(4);
    let width = t / panels as f64;
    let minus_i = Complex64::new(0.0, -1.0);
    for p in 0..panels {
        let lo = p as f64 * width;
        let mid = lo + 0.5 * width;
        for (x, w) in gx.iter().zip(gw.iter()) {
            let s = mid + 0.5 * width * x;
            let fs = forcing(s)?;
            let kicked = linear_propagator(&fs, tag, t - s)?;
            out.axpy(minus_i * Complex64::new(w * 0.5 * width, 0.0), &kicked)?;
        }
    }
    Ok(out)
}

/// Duhamel values at every node of a uniform time grid, with the forcing
/// known by its node samples and interpolated cubically inside each panel.
fn duhamel_on_grid(
    tag: DispersionTag,
    f0: &SpectralField,
    forcing: &[SpectralField],
    times: &[f64],
) -> Result<Vec<SpectralField>> {
    let panels = times.len() - 1;
    assert_eq!(forcing.len(), times.len());
    let (gx, gw) = gauss_legendre(4);
    let minus_i = Complex64::new(0.0, -1.0);

    let mut out = Vec::with_capacity(times.len());
    out.push(f0.clone());
    let mut accumulated = SpectralField::zeros(*f0.grid());
    let width = times[1] - times[0];

    for p in 0..panels {
        // Integral over this panel, propagated to its right endpoint.
        let stencil_lo = p.saturating_sub(1).min(panels.saturating_sub(3));
        let stencil: [usize; 4] = [stencil_lo, stencil_lo + 1, stencil_lo + 2, stencil_lo + 3];
        let mut panel = SpectralField::zeros(*f0.grid());
        let mid = 0.5 * (times[p] + times[p + 1]);
        for (x, w) in gx.iter().zip(gw.iter()) {
            let s = mid + 0.5 * width * x;
            // Cubic Lagrange combination of the four stencil samples.
            let mut interp = SpectralField::zeros(*f0.grid());
            for (a, &ia) in stencil.iter().enumerate() {
                let mut coeff = 1.0;
                for (b, &ib) in stencil.iter().enumerate() {
                    if a != b {
                        coeff *= (s - times[ib]) / (times[ia] - times[ib]);
                    }
                }
                interp.axpy(Complex64::new(coeff, 0.0), &forcing[ia])?;
            }
            let kicked = linear_propagator(&interp, tag, times[p + 1] - s)?;
            panel.axpy(Complex64::new(w * 0.5 * width, 0.0), &kicked)?;
        }
        accumulated = linear_propagator(&accumulated, tag, width)?;
        accumulated.axpy(Complex64::new(1.0, 0.0), &panel)?;

        let mut value = linear_propagator(f0, tag, times[p + 1])?;
        value.axpy(minus_i, &accumulated)?;
        out.push(value);
    }
    Ok(out)
}

/// Picard iteration for the first-order system on `[0, delta]`.
///
/// Iterates start from the free flows and apply the Duhamel map with the
/// previous iterate in the nonlinearity, on a uniform time grid. The grid
/// has [`PICARD_TIME_PANELS`] panels by default and grows (up to
/// [`PICARD_MAX_PANELS`]) until the fastest dispersive phase on the lattice
/// advances at most half a radian per panel, so the forcing interpolation
/// stays resolved. Differences are measured in `G^{sigma,0}` for `u` and
/// `G^{sigma,1}` for `n_pm`, sampled at the nodes; iteration stops when
/// their sum drops below `tol`.
///
/// Non-convergence within `max_iter` is reported, not an error: the returned
/// report carries `converged = false` (the chosen `delta` was too large).
pub fn picard_solve(
    u0: &SpectralField,
    phi_plus: &SpectralField,
    phi_minus: &SpectralField,
    sigma: f64,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Trajectory, PicardReport)> {
    if !(delta > 0.0) {
        return Err(KgsError::Domain(format!("delta must be positive, got {delta}")));
    }
    if u0.grid() != phi_plus.grid() || u0.grid() != phi_minus.grid() {
        return Err(KgsError::GridMismatch("initial data grids differ".into()));
    }
    let g0 = GevreyParams::new(sigma, 0.0)?;
    let g1 = GevreyParams::new(sigma, 1.0)?;
    for (name, f, p) in [
        ("u0", u0, &g0),
        ("phi_+", phi_plus, &g1),
        ("phi_-", phi_minus, &g1),
    ] {
        let norm = gevrey_norm(f, p)?;
        if !norm.is_finite() {
            return Err(KgsError::Domain(format!("{name} has non-finite Gevrey norm")));
        }
    }

    let grid = u0.grid();
    let xi_max_sq = grid.dim() as f64
        * (grid.points_per_axis() as f64 / (2.0 * grid.length_scale())).powi(2);
    let phase_rate = xi_max_sq.max((1.0 + xi_max_sq).sqrt());
    let panels = ((delta * phase_rate / PICARD_PHASE_PER_PANEL).ceil() as usize)
        .clamp(PICARD_TIME_PANELS, PICARD_MAX_PANELS);
    let times: Vec<f64> = (0..=panels)
        .map(|j| delta * j as f64 / panels as f64)
        .collect();

    let minus_half = Complex64::new(-0.5, 0.0);
    let mut u: Vec<SpectralField> = Vec::with_capacity(times.len());
    let mut np: Vec<SpectralField> = Vec::with_capacity(times.len());
    let mut nm: Vec<SpectralField> = Vec::with_capacity(times.len());
    for &tj in &times {
        u.push(linear_propagator(u0, DispersionTag::Schrodinger, tj)?);
        np.push(linear_propagator(phi_plus, DispersionTag::WavePlus, tj)?);
        nm.push(linear_propagator(phi_minus, DispersionTag::WaveMinus, tj)?);
    }

    let mut diffs = Vec::new();
    let mut contraction = Vec::new();
    let mut converged = false;
    let mut iterations = 0usize;

    for _k in 1..=max_iter {
        iterations += 1;
        // Forcing samples of the previous iterate.
        let mut f_u = Vec::with_capacity(times.len());
        let mut f_p = Vec::with_capacity(times.len());
        let mut f_m = Vec::with_capacity(times.len());
        for j in 0..times.len() {
            let n_sum = np[j].add(&nm[j])?;
            f_u.push(dealiased_product(&u[j], &n_sum)?.scale(minus_half));
            let source =
                apply_multiplier(&modulus_squared(&u[j])?, &MultiplierSymbol::InverseBracket)?;
            f_p.push(source.scale(Complex64::new(-1.0, 0.0)));
            f_m.push(source);
        }

        let new_u = duhamel_on_grid(DispersionTag::Schrodinger, u0, &f_u, &times)?;
        let new_np = duhamel_on_grid(DispersionTag::WavePlus, phi_plus, &f_p, &times)?;
        let new_nm = duhamel_on_grid(DispersionTag::WaveMinus, phi_minus, &f_m, &times)?;

        // A diverging iterate overflows the difference norm; that is a
        // non-convergence outcome, not an error.
        let diff_norm = |f: &SpectralField, p: &GevreyParams| -> f64 {
            gevrey_norm(f, p).unwrap_or(f64::INFINITY)
        };
        let mut du = 0.0f64;
        let mut dp = 0.0f64;
        let mut dm = 0.0f64;
        for j in 0..times.len() {
            du = du.max(diff_norm(&new_u[j].sub(&u[j])?, &g0));
            dp = dp.max(diff_norm(&new_np[j].sub(&np[j])?, &g1));
            dm = dm.max(diff_norm(&new_nm[j].sub(&nm[j])?, &g1));
        }
        let d = du + dp + dm;
        if let Some(prev) = diffs.last() {
            contraction.push(d / prev);
        }
        diffs.push(d);
        u = new_u;
        np = new_np;
        nm = new_nm;

        if d <= tol || !d.is_finite() {
            converged = d <= tol;
            break;
        }
    }

    let snapshots: Vec<KgsState> = (0..times.len())
        .map(|j| KgsState {
            u: u[j].clone(),
            n_plus: np[j].clone(),
            n_minus: nm[j].clone(),
            t: times[j],
        })
        .collect();
    let traj = Trajectory {
        snapshots,
        dt: delta / panels as f64,
        scheme: "picard",
        steps: panels,
    };
    let report = PicardReport {
        iterations,
        diffs,
        contraction,
        converged,
        delta,
        sigma,
    };
    Ok((traj, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_initial_data, InitialDataSpec, SpectrumShape};
    use crate::spectral::TorusGrid;
    use crate::testutil::rand_field;

    fn grid1d(n: usize, l: f64) -> TorusGrid {
        TorusGrid::new(1, n, l).unwrap()
    }

    fn small_data(grid: TorusGrid, amp: f64) -> (SpectralField, SpectralField, SpectralField) {
        let spec = InitialDataSpec {
            sigma0: 0.4,
            amp_u: amp,
            amp_n0: amp * 0.5,
            amp_n1: amp * 0.5,
            shape: SpectrumShape::Ell1Exponential,
            seed: 17,
        };
        make_initial_data(&spec, grid).unwrap()
    }

    #[test]
    fn gauss_legendre_matches_known_rules() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / 3.0f64.sqrt();
        assert!((x[0] + r).abs() < 1e-14 && (x[1] - r).abs() < 1e-14);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);

        let (x, w) = gauss_legendre(5);
        assert!((x[2]).abs() < 1e-15);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);

        // Degree-2n-1 exactness.
        for n in 2..=8usize {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let quad: f64 = x
                    .iter()
                    .zip(w.iter())
                    .map(|(xi, wi)| wi * xi.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                assert!(
                    (quad - exact).abs() < 1e-13,
                    "n={n} deg={deg}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn propagator_identity_unitarity_group_law() {
        let grid = grid1d(32, 1.0);
        let f = rand_field(grid, 5);
        for tag in [
            DispersionTag::Schrodinger,
            DispersionTag::WavePlus,
            DispersionTag::WaveMinus,
        ] {
            let id = linear_propagator(&f, tag, 0.0).unwrap();
            assert_eq!(id.coeffs(), f.coeffs());

            let moved = linear_propagator(&f, tag, 1.7).unwrap();
            assert!((moved.l2_norm() - f.l2_norm()).abs() < 1e-13 * f.l2_norm());

            let ab = linear_propagator(&linear_propagator(&f, tag, 0.3).unwrap(), tag, 0.9).unwrap();
            let once = linear_propagator(&f, tag, 1.2).unwrap();
            let err = ab
                .coeffs()
                .iter()
                .zip(once.coeffs().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-13 * f.l2_norm());
        }
    }

    #[test]
    fn propagator_solves_free_schrodinger() {
        // d/dt of e^{-it|xi|^2} hat(u) must equal -i|xi|^2 hat(u): check one
        // mode against the rhs convention.
        let grid = grid1d(16, 2.0);
        let mut u = SpectralField::zeros(grid);
        u.set_coeff(&[3], Complex64::new(1.0, 0.0));
        let dt = 1e-6;
        let moved = linear_propagator(&u, DispersionTag::Schrodinger, dt).unwrap();
        let derivative = (moved.coeff_at(&[3]) - u.coeff_at(&[3])) / dt;
        let xi_sq = (1.5f64).powi(2);
        let expected = Complex64::new(0.0, -xi_sq);
        assert!((derivative - expected).norm() < 1e-4);
    }

    #[test]
    fn strang_zero_coupling_is_exact_linear() {
        let grid = grid1d(64, 1.0);
        let (_, phi_plus, phi_minus) = small_data(grid, 0.5);
        let state = KgsState::new(
            SpectralField::zeros(grid),
            phi_plus.clone(),
            phi_minus.clone(),
            0.0,
        )
        .unwrap();
        let traj = evolve(&state, 1.0, 0.01, &[1.0]).unwrap();
        let exact_p = linear_propagator(&phi_plus, DispersionTag::WavePlus, 1.0).unwrap();
        let exact_m = linear_propagator(&phi_minus, DispersionTag::WaveMinus, 1.0).unwrap();
        let end = traj.last();
        let err = end
            .n_plus
            .coeffs()
            .iter()
            .zip(exact_p.coeffs().iter())
            .chain(end.n_minus.coeffs().iter().zip(exact_m.coeffs().iter()))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "linear mismatch {err}");
        assert!(end.u.l2_norm() == 0.0);
    }

    #[test]
    fn strang_local_error_is_third_order() {
        let grid = grid1d(64, 4.0);
        let (u0, pp, pm) = small_data(grid, 0.4);
        let state = KgsState::new(u0, pp, pm, 0.0).unwrap();

        let local_error = |dt: f64| -> f64 {
            let one = strang_step(&state, dt).unwrap();
            let mut reference = state.clone();
            for _ in 0..32 {
                reference = strang_step(&reference, dt / 32.0).unwrap();
            }
            one.u
                .sub(&reference.u)
                .unwrap()
                .l2_norm()
                .max(one.n_plus.sub(&reference.n_plus).unwrap().l2_norm())
        };
        let e1 = local_error(0.1);
        let e2 = local_error(0.05);
        let ratio = e1 / e2;
        assert!(
            (6.0..10.5).contains(&ratio),
            "local error ratio {ratio}, errors {e1} {e2}"
        );
    }

    #[test]
    fn strang_preserves_conjugate_pair() {
        let grid = grid1d(64, 1.0);
        let (u0, pp, pm) = small_data(grid, 0.8);
        let mut state = KgsState::new(u0, pp, pm, 0.0).unwrap();
        for _ in 0..100 {
            state = strang_step(&state, 0.01).unwrap();
            assert!(state.conjugate_pair_deviation() < 1e-12);
        }
    }

    #[test]
    fn evolve_weak_coupling_matches_free_schrodinger() {
        // phi_pm = 0 and a single tiny u-mode: the n_pm sources cancel in
        // the coupling sum up to O(amp^2), so u follows the free flow.
        let grid = grid1d(64, 1.0);
        let mut u0 = SpectralField::zeros(grid);
        u0.set_coeff(&[3], Complex64::new(1e-5, 0.0));
        let state = KgsState::new(
            u0.clone(),
            SpectralField::zeros(grid),
            SpectralField::zeros(grid),
            0.0,
        )
        .unwrap();
        let traj = evolve(&state, 1.0, 0.01, &[1.0]).unwrap();
        let free = linear_propagator(&u0, DispersionTag::Schrodinger, 1.0).unwrap();
        let err = traj
            .last()
            .u
            .coeffs()
            .iter()
            .zip(free.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / 1e-5;
        assert!(err < 1e-10, "free-flow deviation {err}");
    }

    #[test]
    fn evolve_zero_horizon_returns_initial_state() {
        let grid = grid1d(16, 1.0);
        let state = KgsState::zeros(grid);
        let traj = evolve(&state, 0.0, 0.1, &[0.0]).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].t, 0.0);
    }

    #[test]
    fn evolve_rejects_misaligned_times() {
        let grid = grid1d(16, 1.0);
        let state = KgsState::zeros(grid);
        assert!(evolve(&state, 1.0, 0.3, &[1.0]).is_err());
        assert!(evolve(&state, 1.0, 0.25, &[0.6]).is_err());
        assert!(evolve(&state, 1.0, 0.25, &[0.5, 0.25]).is_err());
    }

    #[test]
    fn evolve_snapshots_exact_times() {
        let grid = grid1d(32, 1.0);
        let (u0, pp, pm) = small_data(grid, 0.3);
        let state = KgsState::new(u0, pp, pm, 0.0).unwrap();
        let traj = evolve(&state, 0.5, 0.005, &[0.0, 0.25, 0.5]).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.25, 0.5]);
        assert_eq!(traj.steps, 100);
    }

    #[test]
    fn duhamel_zero_forcing_is_free_flow() {
        let grid = grid1d(32, 1.0);
        let f = rand_field(grid, 9);
        let zero = SpectralField::zeros(grid);
        let out = duhamel(
            DispersionTag::WaveMinus,
            &f,
            |_s| Ok(zero.clone()),
            0.8,
            8,
        )
        .unwrap();
        let exact = linear_propagator(&f, DispersionTag::WaveMinus, 0.8).unwrap();
        let err = out
            .coeffs()
            .iter()
            .zip(exact.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);

        let starved = duhamel(DispersionTag::WaveMinus, &f, |_s| Ok(zero.clone()), 0.8, 1);
        assert!(starved.is_err());
    }

    #[test]
    fn duhamel_constant_forcing_zero_mode() {
        // At xi = 0 the Schrodinger propagator is the identity, so the
        // integral term of a constant forcing G is exactly -i t G.
        let grid = grid1d(16, 1.0);
        let mut g = SpectralField::zeros(grid);
        g.set_coeff(&[0], Complex64::new(0.3, -0.7));
        let f = SpectralField::zeros(grid);
        let t = 1.25;
        let out = duhamel(DispersionTag::Schrodinger, &f, |_s| Ok(g.clone()), t, 16).unwrap();
        let expected = Complex64::new(0.0, -t) * g.coeff_at(&[0]);
        assert!((out.coeff_at(&[0]) - expected).norm() < 1e-12);
    }

    #[test]
    fn duhamel_self_convergence() {
        // Oscillatory forcing on a single mode with a closed-form integral.
        let grid = grid1d(16, 1.0);
        let mut g = SpectralField::zeros(grid);
        g.set_coeff(&[2], Complex64::new(1.0, 0.0));
        let f = SpectralField::zeros(grid);
        let omega = 9.0;
        let t = 2.0;
        let tag = DispersionTag::Schrodinger;
        // hat(u)(t) = -i e^{-i t h_p} int_0^t e^{i s (h_p + omega)} ds * ghat,
        // with propagator phase h_p = |xi|^2 = 4.
        let hp = 4.0;
        let phase = hp + omega;
        let integral = (Complex64::new(0.0, phase * t).exp() - 1.0) / Complex64::new(0.0, phase);
        let exact = Complex64::new(0.0, -1.0) * Complex64::new(0.0, -hp * t).exp() * integral;

        let run = |nodes: usize| -> f64 {
            let out = duhamel(
                tag,
                &f,
                |s| {
                    let phase = Complex64::new(0.0, omega * s).exp();
                    Ok(g.scale(phase))
                },
                t,
                nodes,
            )
            .unwrap();
            (out.coeff_at(&[2]) - exact).norm()
        };
        let e8 = run(8);
        let e16 = run(16);
        let e32 = run(32);
        assert!(e8 / e16 >= 4.0, "e8={e8}, e16={e16}");
        assert!(e16 / e32 >= 4.0, "e16={e16}, e32={e32}");
    }

    #[test]
    fn lifespan_formula() {
        let grid = grid1d(32, 1.0);
        let zero = SpectralField::zeros(grid);
        let delta = lifespan(&zero, &zero, &zero, 0.3, 2.0, 0.7).unwrap();
        assert!((delta - 0.7).abs() < 1e-15);

        assert_eq!(lifespan_exponent(1).unwrap(), 2.0);
        assert_eq!(lifespan_exponent(2).unwrap(), 2.0);
        assert_eq!(lifespan_exponent(3).unwrap(), 4.0);
        assert!(lifespan_exponent(4).is_err());

        // Doubling large data norms shrinks delta by about 2^{-q}.
        let (u0, pp, pm) = small_data(grid, 40.0);
        let d1 = lifespan(&u0, &pp, &pm, 0.2, 2.0, 1.0).unwrap();
        let d2 = lifespan(
            &u0.scale(Complex64::new(2.0, 0.0)),
            &pp.scale(Complex64::new(2.0, 0.0)),
            &pm.scale(Complex64::new(2.0, 0.0)),
            0.2,
            2.0,
            1.0,
        )
        .unwrap();
        let shrink = d1 / d2;
        assert!((3.5..4.5).contains(&shrink), "shrink factor {shrink}");
    }

    #[test]
    fn picard_zero_data_converges_immediately() {
        let grid = grid1d(32, 1.0);
        let zero = SpectralField::zeros(grid);
        let (_, pp, pm) = small_data(grid, 0.5);
        let (traj, report) =
            picard_solve(&zero, &pp, &pm, 0.2, 0.1, 1e-12, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        // n_pm stay on the free flow.
        let exact = linear_propagator(&pp, DispersionTag::WavePlus, 0.1).unwrap();
        let err = traj
            .last()
            .n_plus
            .coeffs()
            .iter()
            .zip(exact.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn picard_agrees_with_strang_on_small_data() {
        let grid = grid1d(128, 4.0);
        let (u0, pp, pm) = small_data(grid, 0.4);
        let sigma = 0.2;
        let q = lifespan_exponent(1).unwrap();
        let delta = lifespan(&u0, &pp, &pm, sigma, q, DEFAULT_LIFESPAN_C).unwrap();
        let (traj, report) = picard_solve(&u0, &pp, &pm, sigma, delta, 1e-11, 30).unwrap();
        assert!(report.converged, "diffs: {:?}", report.diffs);

        let state = KgsState::new(u0, pp, pm, 0.0).unwrap();
        let dt = delta / 8192.0;
        let strang = evolve(&state, delta, dt, &[delta]).unwrap();
        let diff = traj.last().u.sub(&strang.last().u).unwrap();
        let err = gevrey_norm(&diff, &GevreyParams::new(sigma / 2.0, 0.0).unwrap()).unwrap();
        assert!(err < 1e-6, "picard/strang disagreement {err}");
    }

    /// Calibration harness behind `DEFAULT_LIFESPAN_C`: scans candidate
    /// constants over the calibration family and reports the worst late
    /// contraction factor. Run with `--ignored --nocapture` to re-derive.
    #[test]
    #[ignore]
    fn picard_scan_lifespan_c() {
        use crate::model::{make_initial_data, InitialDataSpec, SpectrumShape};
        let grid = grid1d(128, 4.0);
        let sigma = 0.15;
        for c in [64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0] {
            let mut worst: f64 = 0.0;
            let mut all_converged = true;
            for amp in [0.5, 1.0, 2.0] {
                let spec = InitialDataSpec {
                    sigma0: 0.3,
                    amp_u: amp,
                    amp_n0: amp * 0.5,
                    amp_n1: amp * 0.5,
                    shape: SpectrumShape::Ell1Exponential,
                    seed: 17,
                };
                let (u0, pp, pm) = make_initial_data(&spec, grid).unwrap();
                let delta = lifespan(&u0, &pp, &pm, sigma, 2.0, c).unwrap();
                let (_, report) = picard_solve(&u0, &pp, &pm, sigma, delta, 1e-11, 25).unwrap();
                all_converged &= report.converged;
                for &r in report.contraction.iter().skip(1) {
                    worst = worst.max(r);
                }
            }
            println!("C = {c}: converged {all_converged}, worst contraction from iterate 3: {worst:.4}");
        }
    }

    #[test]
    fn local_bounds_shadowing() {
        // Over [0, delta] the solution norms stay within K = 4 of the data:
        // sup ||u(t)||_{G^{sigma,0}} <= 4 ||u0||_{G^{sigma,0}} and
        // sup ||n_pm(t)||_{G^{sigma,1}} <= 4 (||phi_pm||_{G^{sigma,1}} +
        // ||u0||_{G^{sigma,0}}^2).
        let sigma = 0.15;
        let q = lifespan_exponent(1).unwrap();
        let g0 = GevreyParams::new(sigma, 0.0).unwrap();
        let g1 = GevreyParams::new(sigma, 1.0).unwrap();
        for amp in [0.5, 1.0, 2.0] {
            let grid = grid1d(128, 4.0);
            let spec = crate::model::InitialDataSpec {
                sigma0: 0.3,
                amp_u: amp,
                amp_n0: amp * 0.5,
                amp_n1: amp * 0.5,
                shape: crate::model::SpectrumShape::Ell1Exponential,
                seed: 17,
            };
            let (u0, pp, pm) = crate::model::make_initial_data(&spec, grid).unwrap();
            let delta = lifespan(&u0, &pp, &pm, sigma, q, DEFAULT_LIFESPAN_C).unwrap();
            let (traj, report) = picard_solve(&u0, &pp, &pm, sigma, delta, 1e-10, 30).unwrap();
            assert!(report.converged);

            let u0_norm = gevrey_norm(&u0, &g0).unwrap();
            let pp_norm = gevrey_norm(&pp, &g1).unwrap();
            let pm_norm = gevrey_norm(&pm, &g1).unwrap();
            for snap in &traj.snapshots {
                let u_t = gevrey_norm(&snap.u, &g0).unwrap();
                assert!(u_t <= 4.0 * u0_norm, "amp {amp}: u norm {u_t} vs {u0_norm}");
                let np_t = gevrey_norm(&snap.n_plus, &g1).unwrap();
                let nm_t = gevrey_norm(&snap.n_minus, &g1).unwrap();
                assert!(np_t <= 4.0 * (pp_norm + u0_norm * u0_norm));
                assert!(nm_t <= 4.0 * (pm_norm + u0_norm * u0_norm));
            }
        }
    }

    #[test]
    fn picard_oversized_delta_fails_to_contract() {
        let grid = grid1d(64, 1.0);
        let (u0, pp, pm) = small_data(grid, 2.0);
        let sigma = 0.2;
        let q = lifespan_exponent(1).unwrap();
        let delta = lifespan(&u0, &pp, &pm, sigma, q, DEFAULT_LIFESPAN_C).unwrap();
        let (_, report) = picard_solve(&u0, &pp, &pm, sigma, delta * 100.0, 1e-11, 12).unwrap();
        let late_growth = report
            .contraction
            .iter()
            .skip(2)
            .cloned()
            .fold(0.0f64, f64::max);
        assert!(
            !report.converged || late_growth > 1.0,
            "contraction {:?}",
            report.contraction
        );
    }
}
