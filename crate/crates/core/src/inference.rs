//! Parameter recovery from centroid-versus-polarizer-angle data.
//!
//! The centroid model depends on the phase only through `cosφ`, so `φ` is
//! searched on `[0°, 180°]`. The search is a coarse grid scan followed by a
//! golden-section refinement around the best grid node.

use serde::{Deserialize, Serialize};

use crate::model::{self, DisplacerState, ModelError, PostSelection};

/// Default per-point centroid uncertainty, one CCD pixel.
pub const DEFAULT_CENTROID_SIGMA_UM: f64 = 9.0;

/// `sin2β` magnitude below which a record carries no phase information.
const PHASE_BLIND_EPS: f64 = 1e-9;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("phase is not identifiable: every record has sin2β ≈ 0")]
    NonIdentifiable,
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub beta_deg: f64,
    pub centroid_um: f64,
    pub centroid_sigma_um: f64,
    pub loss_db: Option<f64>,
}

impl SweepRecord {
    pub fn new(beta_deg: f64, centroid_um: f64) -> Self {
        Self {
            beta_deg,
            centroid_um,
            centroid_sigma_um: DEFAULT_CENTROID_SIGMA_UM,
            loss_db: None,
        }
    }
}

/// Parameters fixed by the alignment step and held constant during the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownParams {
    pub delta_x_um: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub grid_step_deg: f64,
    pub tolerance_deg: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_step_deg: 1.0,
            tolerance_deg: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub phi_hat_deg: f64,
    pub gamma_used: f64,
    pub delta_x_used_um: f64,
    /// Unweighted RMS of the centroid residuals.
    pub residual_rms_um: f64,
    /// 1-σ variance of `φ̂` from the Gauss-Newton curvature, deg². Infinite
    /// where the model is flat in `φ` (at 0° and 180°).
    pub covariance_phi_deg2: f64,
    pub chi_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope_um_per_deg: f64,
    pub intercept_um: f64,
    pub beta_range_deg: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn predict(&self, beta_deg: f64) -> f64 {
        self.slope_um_per_deg * beta_deg + self.intercept_um
    }
}

fn centroid_model(beta_deg: f64, phi_rad: f64, delta_x_um: f64, gamma: f64) -> f64 {
    let b = beta_deg.to_radians();
    let denom = 1.0 + gamma * (2.0 * b).sin() * phi_rad.cos();
    delta_x_um * (2.0 * b).cos() / denom
}

fn validate_records(data: &[SweepRecord]) -> Result<(), InferenceError> {
    for r in data {
        if !(r.beta_deg.is_finite() && r.centroid_um.is_finite()) {
            return Err(InferenceError::InvalidParameter {
                name: "record",
                value: r.beta_deg,
                reason: "beta and centroid must be finite",
            });
        }
        if !(r.centroid_sigma_um.is_finite() && r.centroid_sigma_um > 0.0) {
            return Err(InferenceError::InvalidParameter {
                name: "centroid_sigma_um",
                value: r.centroid_sigma_um,
                reason: "must be finite and > 0",
            });
        }
    }
    Ok(())
}

fn distinct_betas(betas: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = betas.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn validate_known(known: &KnownParams) -> Result<(), InferenceError> {
    if !(known.delta_x_um.is_finite() && known.delta_x_um > 0.0) {
        return Err(InferenceError::InvalidParameter {
            name: "delta_x_um",
            value: known.delta_x_um,
            reason: "must be finite and > 0",
        });
    }
    if !(known.gamma > 0.0 && known.gamma <= 1.0) {
        return Err(InferenceError::InvalidParameter {
            name: "gamma",
            value: known.gamma,
            reason: "must lie in (0, 1]",
        });
    }
    Ok(())
}

fn check_fit_preconditions(data: &[SweepRecord]) -> Result<(), InferenceError> {
    validate_records(data)?;
    let distinct = distinct_betas(data.iter().map(|r| r.beta_deg));
    if distinct < 3 {
        return Err(InferenceError::InsufficientData(format!(
            "need at least 3 distinct beta values, got {distinct}"
        )));
    }
    if data
        .iter()
        .all(|r| (2.0 * r.beta_deg.to_radians()).sin().abs() < PHASE_BLIND_EPS)
    {
        return Err(InferenceError::NonIdentifiable);
    }
    Ok(())
}

/// Weighted sum of squared residuals; infinite where the model is singular.
fn chi_squared(data: &[SweepRecord], phi_rad: f64, delta_x_um: f64, gamma: f64) -> f64 {
    data.iter()
        .map(|r| {
            let m = centroid_model(r.beta_deg, phi_rad, delta_x_um, gamma);
            let z = (r.centroid_um - m) / r.centroid_sigma_um;
            z * z
        })
        .fold(0.0, |acc, z2| if z2.is_finite() { acc + z2 } else { f64::INFINITY })
}

/// Grid scan over `[0°, 180°]` then golden-section search in the bracket
/// around the best node.
fn minimize_over_phase(objective: impl Fn(f64) -> f64, opts: &FitOptions) -> f64 {
    let steps = (180.0 / opts.grid_step_deg).ceil().max(2.0) as usize;
    let step = 180.0 / steps as f64;
    let (best, _) = (0..=steps)
        .map(|i| (i, objective(i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, f)| if f < acc.1 { (i, f) } else { acc });

    let mut lo = (best.saturating_sub(1)) as f64 * step;
    let mut hi = ((best + 1).min(steps)) as f64 * step;
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while hi - lo > opts.tolerance_deg {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = objective(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the bracket may collapse onto a domain edge where the minimum sits
    [lo, mid, hi]
        .into_iter()
        .map(|p| (p, objective(p)))
        .fold((mid, f64::INFINITY), |acc, (p, f)| if f < acc.1 { (p, f) } else { acc })
        .0
}

fn summarize(data: &[SweepRecord], phi_deg: f64, delta_x_um: f64, gamma: f64) -> FitResult {
    let phi = phi_deg.to_radians();
    let mut ss = 0.0;
    let mut info = 0.0;
    for r in data {
        let b = r.beta_deg.to_radians();
        let s = (2.0 * b).sin();
        let denom = 1.0 + gamma * s * phi.cos();
        let m = delta_x_um * (2.0 * b).cos() / denom;
        ss += (r.centroid_um - m).powi(2);
        // ∂m/∂φ per degree
        let jac = delta_x_um * (2.0 * b).cos() * gamma * s * phi.sin() / (denom * denom) * (std::f64::consts::PI / 180.0);
        info += (jac / r.centroid_sigma_um).powi(2);
    }
    FitResult {
        phi_hat_deg: phi_deg,
        gamma_used: gamma,
        delta_x_used_um: delta_x_um,
        residual_rms_um: (ss / data.len() as f64).sqrt(),
        covariance_phi_deg2: if info > 0.0 { 1.0 / info } else { f64::INFINITY },
        chi_squared: chi_squared(data, phi, delta_x_um, gamma),
    }
}

/// Fits the phase `φ` with `Δx` and `γ` held fixed.
pub fn fit_phi(data: &[SweepRecord], known: &KnownParams) -> Result<FitResult, InferenceError> {
    fit_phi_with(data, known, &FitOptions::default())
}

pub fn fit_phi_with(data: &[SweepRecord], known: &KnownParams, opts: &FitOptions) -> Result<FitResult, InferenceError> {
    validate_known(known)?;
    check_fit_preconditions(data)?;
    let phi_deg = minimize_over_phase(
        |p| chi_squared(data, p.to_radians(), known.delta_x_um, known.gamma),
        opts,
    );
    Ok(summarize(data, phi_deg, known.delta_x_um, known.gamma))
}

/// Best `Δx` for a fixed phase. The model is linear in `Δx`, so this is a
/// closed-form weighted projection.
fn best_delta_x(data: &[SweepRecord], phi_rad: f64, gamma: f64) -> f64 {
    let (num, den) = data.iter().fold((0.0, 0.0), |(n, d), r| {
        let g = centroid_model(r.beta_deg, phi_rad, 1.0, gamma);
        let w = r.centroid_sigma_um.powi(-2);
        (n + w * g * r.centroid_um, d + w * g * g)
    });
    if den > 0.0 && den.is_finite() {
        num / den
    } else {
        f64::NAN
    }
}

/// Joint fit of `φ` and `Δx` with `γ` held at `known.gamma`. `known.delta_x_um`
/// is ignored.
pub fn fit_phi_and_delta_x(
    data: &[SweepRecord],
    known: &KnownParams,
    opts: &FitOptions,
) -> Result<FitResult, InferenceError> {
    validate_known(&KnownParams {
        delta_x_um: 1.0,
        gamma: known.gamma,
    })?;
    check_fit_preconditions(data)?;
    let profile = |phi_deg: f64| {
        let phi = phi_deg.to_radians();
        let dx = best_delta_x(data, phi, known.gamma);
        if dx.is_finite() {
            chi_squared(data, phi, dx, known.gamma)
        } else {
            f64::INFINITY
        }
    };
    let phi_deg = minimize_over_phase(profile, opts);
    let dx = best_delta_x(data, phi_deg.to_radians(), known.gamma);
    Ok(summarize(data, phi_deg, dx, known.gamma))
}

/// Ordinary least squares of centroid on `β` over the records whose `β` lies
/// in the closed interval `beta_range_deg`.
pub fn linear_region_fit(data: &[SweepRecord], beta_range_deg: (f64, f64)) -> Result<LinearFit, InferenceError> {
    let (lo, hi) = beta_range_deg;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(InferenceError::InvalidParameter {
            name: "beta_range",
            value: lo,
            reason: "must be a finite interval with min <= max",
        });
    }
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|r| r.beta_deg >= lo && r.beta_deg <= hi)
        .map(|r| (r.beta_deg, r.centroid_um))
        .collect();
    let distinct = distinct_betas(pts.iter().map(|p| p.0));
    if distinct < 2 {
        return Err(InferenceError::InsufficientData(format!(
            "need at least 2 distinct beta values in [{lo}, {hi}], got {distinct}"
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0), |(sxx, sxy, syy), &(x, y)| {
        let dx = x - mean_x;
        let dy = y - mean_y;
        (sxx + dx * dx, sxy + dx * dy, syy + dy * dy)
    });
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts
        .iter()
        .map(|&(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit {
        slope_um_per_deg: slope,
        intercept_um: intercept,
        beta_range_deg,
        r_squared,
        points: pts.len(),
    })
}

/// Smallest centroid step reachable with a polarizer mount of the given
/// angular resolution (degrees): `|slope|·resolution`.
pub fn sensitivity(fit: &LinearFit, angular_resolution_deg: f64) -> Result<f64, InferenceError> {
    if !(angular_resolution_deg.is_finite() && angular_resolution_deg >= 0.0) {
        return Err(InferenceError::InvalidParameter {
            name: "angular_resolution",
            value: angular_resolution_deg,
            reason: "must be finite and >= 0",
        });
    }
    Ok(fit.slope_um_per_deg.abs() * angular_resolution_deg)
}

pub fn arcmin_to_deg(arcmin: f64) -> f64 {
    arcmin / 60.0
}

/// Insertion loss predicted at each `β` (degrees).
pub fn predict_loss_curve(dev: &DisplacerState, betas_deg: &[f64]) -> Result<Vec<(f64, f64)>, InferenceError> {
    betas_deg
        .iter()
        .map(|&b| Ok((b, model::insertion_loss_db(dev, &PostSelection::from_degrees(b))?)))
        .collect()
}
