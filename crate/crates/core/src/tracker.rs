//! Radius-of-analyticity estimation from Fourier decay, charge conservation,
//! and `M_sigma` / `N_sigma` monitoring against the almost-conservation law.
//!
//! The radius estimator works on `l^1` frequency shells: for integer `r`,
//! `shell_max(r) = max { |coeff(k)| : ||k||_1 = r }`. For a field whose
//! coefficients decay like `e^{-sigma ||xi||_1} = e^{-(sigma/L) ||k||_1}`,
//! `log shell_max` is linear in `r` with slope `-sigma/L`, so the estimate is
//! `sigma_hat = -L * slope` from a least-squares fit over a shell band.

use crate::error::{KgsError, Result};
use crate::evolution::Trajectory;
use crate::gevrey::{gevrey_norm, GevreyParams};
use crate::model::KgsState;
use crate::spectral::SpectralField;
use serde::Serialize;

/// Result of one radius fit.
#[derive(Debug, Clone, Serialize)]
pub struct RadiusEstimate {
    /// Estimated strip half-width (clipped at zero).
    pub sigma_hat: f64,
    /// Shell band `[r_lo, r_hi]` (in `||k||_1` units) the fit was asked for.
    pub band: (usize, usize),
    /// Root-mean-square residual of the linear fit in log space.
    pub residual: f64,
    /// Number of usable shells that entered the fit.
    pub shells_used: usize,
    /// Whether any in-band shell was discarded for sitting below the floor.
    pub floor_clipped: bool,
}

/// Time series of the monitored conserved and almost-conserved quantities.
#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub sigma: f64,
    pub times: Vec<f64>,
    /// Charge `||u(t)||_{L^2}^2`.
    pub charge: Vec<f64>,
    /// `M_sigma(t) = ||u(t)||_{G^{sigma,0}}^2`.
    pub m_sigma: Vec<f64>,
    /// `N_sigma(t) = ||n_+(t)||_{G^{sigma,1}} + ||n_-(t)||_{G^{sigma,1}}`.
    pub n_sigma: Vec<f64>,
    /// `|M_sigma(t) - M_sigma(0)|` per snapshot.
    pub m_discrepancy: Vec<f64>,
    /// `|N_sigma(t) - N_sigma(0)|` per snapshot.
    pub n_discrepancy: Vec<f64>,
}

/// Verdict of one almost-conservation check.
#[derive(Debug, Clone, Serialize)]
pub struct AlmostConservationVerdict {
    pub sigma: f64,
    pub delta: f64,
    pub q: f64,
    /// Implied constant of the `M_sigma` bound:
    /// `sup |M(t)-M(0)| / (sigma delta^{1/q} M(0) (M(0)^{1/2} + N(0)))`.
    pub c_hat_m: Option<f64>,
    /// Implied constant of the `N_sigma` analog:
    /// `sup |N(t)-N(0)| / (delta^{1/q} M(0))`.
    pub c_hat_n: Option<f64>,
    pub m_discrepancy: f64,
    pub n_discrepancy: f64,
    /// False when the denominators vanish (trivial data).
    pub applicable: bool,
}

/// Shell maxima of `|coeff|` over integer `l^1` shells, indexed by `r`.
fn shell_maxima(f: &SpectralField) -> Vec<f64> {
    let grid = f.grid();
    let max_r = grid.dim() * (grid.points_per_axis() / 2);
    let mut shells = vec![0.0f64; max_r + 1];
    for (flat, c) in f.coeffs().iter().enumerate() {
        let k = grid.signed_index(flat);
        let r = (k[0].abs() + k[1].abs() + k[2].abs()) as usize;
        let m = c.norm();
        if m > shells[r] {
            shells[r] = m;
        }
    }
    shells
}

/// Estimate the radius of analyticity from `l^1`-shell Fourier decay.
///
/// Shells with maxima below `floor` are discarded; at least 8 usable shells
/// inside `band` are required.
pub fn estimate_radius(
    f: &SpectralField,
    band: (usize, usize),
    floor: f64,
) -> Result<RadiusEstimate> {
    let (r_lo, r_hi) = band;
    if r_lo >= r_hi {
        return Err(KgsError::Domain(format!(
            "fit band must satisfy r_lo < r_hi, got [{r_lo}, {r_hi}]"
        )));
    }
    if !(floor > 0.0) {
        return Err(KgsError::Domain(format!("floor must be positive, got {floor}")));
    }
    let grid = f.grid();
    let max_r = grid.dim() * (grid.points_per_axis() / 2);
    if r_hi > max_r {
        return Err(KgsError::Domain(format!(
            "band upper end {r_hi} beyond lattice range {max_r}"
        )));
    }

    let shells = shell_maxima(f);
    let mut rs = Vec::new();
    let mut logs = Vec::new();
    let mut floor_clipped = false;
    for (r, &m) in shells.iter().enumerate().take(r_hi + 1).skip(r_lo) {
        if m >= floor {
            rs.push(r as f64);
            logs.push(m.ln());
        } else {
            floor_clipped = true;
        }
    }
    if rs.len() < 8 {
        return Err(KgsError::InsufficientData {
            what: "shells",
            got: rs.len(),
            need: 8,
        });
    }

    let (slope, intercept) = least_squares(&rs, &logs);
    let mut residual_sq = 0.0;
    for (r, y) in rs.iter().zip(logs.iter()) {
        let fit = intercept + slope * r;
        residual_sq += (y - fit) * (y - fit);
    }
    let residual = (residual_sq / rs.len() as f64).sqrt();
    let sigma_hat = (-slope * grid.length_scale()).max(0.0);

    Ok(RadiusEstimate {
        sigma_hat,
        band,
        residual,
        shells_used: rs.len(),
        floor_clipped,
    })
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Charge `||u||_{L^2}^2` of the Schrodinger component: the sum of squared
/// coefficient magnitudes (a single unit mode has charge exactly 1).
pub fn charge(state: &KgsState) -> f64 {
    state.u.coeffs().iter().map(|c| c.norm_sqr()).sum()
}

/// Evaluate charge, `M_sigma` and `N_sigma` at every snapshot.
pub fn monitor(traj: &Trajectory, sigma: f64) -> Result<ConservationReport> {
    let g0 = GevreyParams::new(sigma, 0.0)?;
    let g1 = GevreyParams::new(sigma, 1.0)?;
    let mut times = Vec::with_capacity(traj.snapshots.len());
    let mut charges = Vec::with_capacity(traj.snapshots.len());
    let mut m_sigma = Vec::with_capacity(traj.snapshots.len());
    let mut n_sigma = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        times.push(snap.t);
        charges.push(charge(snap));
        let mu = gevrey_norm(&snap.u, &g0)?;
        m_sigma.push(mu * mu);
        n_sigma.push(gevrey_norm(&snap.n_plus, &g1)? + gevrey_norm(&snap.n_minus, &g1)?);
    }
    let m0 = m_sigma.first().copied().unwrap_or(0.0);
    let n0 = n_sigma.first().copied().unwrap_or(0.0);
    let m_discrepancy = m_sigma.iter().map(|m| (m - m0).abs()).collect();
    let n_discrepancy = n_sigma.iter().map(|n| (n - n0).abs()).collect();
    Ok(ConservationReport {
        sigma,
        times,
        charge: charges,
        m_sigma,
        n_sigma,
        m_discrepancy,
        n_discrepancy,
    })
}

/// Fit `sigma(t) ~ c t^{-p}`: least-squares slope of `log sigma` against
/// `log t`, returned as `p_hat = -slope`.
pub fn fit_decay_exponent(times: &[f64], sigmas: &[f64]) -> Result<f64> {
    if times.len() != sigmas.len() {
        return Err(KgsError::Domain(format!(
            "times and sigmas lengths differ: {} vs {}",
            times.len(),
            sigmas.len()
        )));
    }
    if times.len() < 4 {
        return Err(KgsError::InsufficientData {
            what: "samples",
            got: times.len(),
            need: 4,
        });
    }
    if times.iter().any(|&t| t <= 0.0) || sigmas.iter().any(|&s| s <= 0.0) {
        return Err(KgsError::Domain(
            "fit_decay_exponent needs strictly positive times and sigmas".into(),
        ));
    }
    let log_t: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let log_s: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let (slope, _) = least_squares(&log_t, &log_s);
    Ok(-slope)
}

/// Paper reference exponent `p = max{8/(4-d), 4}` of the radius lower bound:
/// 4 in dimensions 1 and 2, and 8 in dimension 3.
pub fn decay_exponent_reference(dim: usize) -> Result<f64> {
    match dim {
        1 | 2 => Ok(4.0),
        3 => Ok(8.0),
        _ => Err(KgsError::Domain(format!("dimension must be 1..=3, got {dim}"))),
    }
}

/// Evaluate the almost-conservation bound over `[0, delta]` from a monitored
/// report and extract the implied constants.
pub fn almost_conservation_check(
    report: &ConservationReport,
    delta: f64,
    q: f64,
) -> Result<AlmostConservationVerdict> {
    if !(delta > 0.0 && q > 0.0) {
        return Err(KgsError::Domain(format!(
            "delta and q must be positive, got delta={delta}, q={q}"
        )));
    }
    let last = report
        .times
        .last()
        .copied()
        .ok_or_else(|| KgsError::Domain("empty report".into()))?;
    if last < delta * (1.0 - 1e-9) {
        return Err(KgsError::Domain(format!(
            "report covers [0, {last}], need [0, {delta}]"
        )));
    }

    let mut m_disc = 0.0f64;
    let mut n_disc = 0.0f64;
    for (i, &t) in report.times.iter().enumerate() {
        if t <= delta * (1.0 + 1e-9) {
            m_disc = m_disc.max(report.m_discrepancy[i]);
            n_disc = n_disc.max(report.n_discrepancy[i]);
        }
    }
    let m0 = report.m_sigma[0];
    let n0 = report.n_sigma[0];
    let scale = delta.powf(1.0 / q);
    let denom_m = report.sigma * scale * m0 * (m0.sqrt() + n0);
    let denom_n = scale * m0;
    let applicable = denom_m > 0.0 && denom_n > 0.0;
    Ok(AlmostConservationVerdict {
        sigma: report.sigma,
        delta,
        q,
        c_hat_m: (denom_m > 0.0).then(|| m_disc / denom_m),
        c_hat_n: (denom_n > 0.0).then(|| n_disc / denom_n),
        m_discrepancy: m_disc,
        n_discrepancy: n_disc,
        applicable,
    })
}

/// Whether a collection of positive values stays within `factor` of each
/// other (max/min <= factor).
pub fn stable_within(values: &[f64], factor: f64) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &v in values {
        if !v.is_finite() {
            return false;
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        return true; // all zero: trivially stable
    }
    lo > 0.0 && hi / lo <= factor
}
