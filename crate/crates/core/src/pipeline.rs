//! End-to-end commands: profile and sweep generation, fitting, sensitivity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig, SweepMode};
use crate::detector::{self, Frame};
use crate::inference::{self, KnownParams, SweepRecord};
use crate::io::{ProfileRow, SweepRow};
use crate::model::{self, PostSelection};
use crate::Error;

/// `start, start + step, …` up to and including `stop` (with a 1e-9·step
/// allowance for rounding). Errors on an empty grid.
pub fn beta_grid(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Vec<f64>, ConfigError> {
    if !(step_deg.is_finite() && step_deg > 0.0) {
        return Err(ConfigError::invalid("sweep.beta_step_deg", format!("{step_deg} must be finite and > 0")));
    }
    if !(start_deg.is_finite() && stop_deg.is_finite()) {
        return Err(ConfigError::invalid("sweep.beta_start_deg", "grid bounds must be finite"));
    }
    if stop_deg < start_deg {
        return Err(ConfigError::invalid(
            "sweep.beta_stop_deg",
            format!("empty grid: stop {stop_deg} < start {start_deg}"),
        ));
    }
    let n = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start_deg + i as f64 * step_deg).collect())
}

/// Noise seed of the frame taken at `beta_deg`; independent of the order in
/// which frames are synthesized.
pub fn frame_seed(run_seed: u64, beta_deg: f64) -> u64 {
    // splitmix64 finalizer
    let mut z = run_seed ^ beta_deg.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Output intensity normalized to the input peak, sampled over
/// `±half_range_w·w` for each polarizer angle.
pub fn run_profile(cfg: &RunConfig, betas_deg: &[f64]) -> Result<Vec<ProfileRow>, Error> {
    if betas_deg.is_empty() {
        return Err(ConfigError::invalid("profile.betas_deg", "must list at least one angle").into());
    }
    let (beam, dev) = cfg.displacer()?;
    let half_range = cfg.profile.half_range_w * beam.width_um();
    let i0 = beam.peak_intensity();
    let mut rows = Vec::with_capacity(betas_deg.len() * cfg.profile.points);
    for &b in betas_deg {
        let ps = PostSelection::from_degrees(b);
        rows.extend(
            model::sample_profile(&beam, &dev, &ps, half_range, cfg.profile.points)
                .into_iter()
                .map(|s| ProfileRow {
                    beta_deg: b,
                    x_um: s.x_um,
                    intensity_norm: s.intensity / i0,
                }),
        );
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Angles whose frames clipped at full well (CCD mode only).
    pub saturated_betas: Vec<f64>,
}

/// One row per grid angle, ascending. Analytic mode evaluates the closed
/// form; CCD mode synthesizes and centroids a frame per angle and measures
/// the loss from the frame total against the input-beam reference.
pub fn run_sweep(cfg: &RunConfig, mode: SweepMode) -> Result<SweepOutput, Error> {
    run_sweep_with_frames(cfg, mode, |_, _| Ok(()))
}

/// As [`run_sweep`], handing every synthesized frame to `on_frame`.
pub fn run_sweep_with_frames(
    cfg: &RunConfig,
    mode: SweepMode,
    mut on_frame: impl FnMut(f64, &Frame) -> Result<(), Error>,
) -> Result<SweepOutput, Error> {
    let betas = beta_grid(cfg.sweep.beta_start_deg, cfg.sweep.beta_stop_deg, cfg.sweep.beta_step_deg)?;
    let (beam, dev) = cfg.displacer()?;
    let mut rows = Vec::with_capacity(betas.len());
    let mut saturated_betas = Vec::new();

    match mode {
        SweepMode::Analytic => {
            for b in betas {
                let ps = PostSelection::from_degrees(b);
                rows.push(SweepRow {
                    beta_deg: b,
                    centroid_um: model::analytic_centroid(&dev, &ps)?,
                    centroid_sigma_um: cfg.sweep.centroid_sigma_um,
                    loss_db: model::insertion_loss_db(&dev, &ps)?,
                    amplification: model::amplification_factor(&dev, &ps)?,
                });
            }
        }
        SweepMode::Ccd => {
            let origin = cfg.ccd.origin_offset_um;
            let base = cfg.ccd_config(cfg.seed);
            let gain = detector::peak_gain(&beam, &dev, &base, origin)?;
            let reference = detector::input_reference_counts(&beam, &base, origin, gain);
            let opts = cfg.centroid_options();
            for b in betas {
                let ps = PostSelection::from_degrees(b);
                let ccd = cfg.ccd_config(frame_seed(cfg.seed, b));
                let frame = detector::synthesize_frame_with_gain(&beam, &dev, &ps, &ccd, origin, gain)?;
                if frame.is_saturated() {
                    saturated_betas.push(b);
                }
                let est = detector::estimate_centroid_with(&frame, &opts)?;
                on_frame(b, &frame)?;
                let amplification = if dev.delta_x_um() > 0.0 {
                    est.x_um / dev.delta_x_um()
                } else {
                    model::amplification_factor(&dev, &ps)?
                };
                rows.push(SweepRow {
                    beta_deg: b,
                    centroid_um: est.x_um,
                    centroid_sigma_um: est.sigma_um,
                    loss_db: -10.0 * (est.total_counts / reference).log10(),
                    amplification,
                });
            }
        }
    }
    Ok(SweepOutput { rows, saturated_betas })
}

/// Writes every frame of a CCD sweep as `beta_<deg>.pgm` into `dir`.
pub fn write_frame(dir: &Path, beta_deg: f64, frame: &Frame) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("beta_{}.pgm", crate::io::format_number(beta_deg)));
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    detector::write_pgm(frame, file)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFitReport {
    pub slope_um_per_deg: f64,
    pub intercept_um: f64,
    pub beta_min_deg: f64,
    pub beta_max_deg: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub phi_hat_deg: f64,
    pub path_difference_um: f64,
    pub lambda_um: f64,
    pub residual_rms_um: f64,
    /// `None` where the curvature vanishes.
    pub covariance_phi_deg2: Option<f64>,
    pub gamma_used: f64,
    pub delta_x_used_um: f64,
    pub joint: bool,
    pub linear_fit: LinearFitReport,
    pub resolution_arcmin: f64,
    pub sensitivity_um: f64,
    pub records: usize,
}

/// Known `Δx` and `γ` from the configured device.
pub fn known_params(cfg: &RunConfig) -> Result<KnownParams, Error> {
    let (_, dev) = cfg.displacer()?;
    Ok(KnownParams {
        delta_x_um: dev.delta_x_um(),
        gamma: dev.gamma(),
    })
}

pub fn run_fit(records: &[SweepRecord], cfg: &RunConfig) -> Result<FitReport, Error> {
    let known = known_params(cfg)?;
    let opts = cfg.fit_options();
    let fit = if cfg.fit.joint {
        inference::fit_phi_and_delta_x(records, &known, &opts)?
    } else {
        inference::fit_phi_with(records, &known, &opts)?
    };
    let linear = inference::linear_region_fit(records, (cfg.fit.linear_min_deg, cfg.fit.linear_max_deg))?;
    let sensitivity_um = inference::sensitivity(&linear, inference::arcmin_to_deg(cfg.fit.resolution_arcmin))?;
    Ok(FitReport {
        phi_hat_deg: fit.phi_hat_deg,
        path_difference_um: model::phase_to_path_difference(fit.phi_hat_deg.to_radians(), cfg.fit.lambda_um)?,
        lambda_um: cfg.fit.lambda_um,
        residual_rms_um: fit.residual_rms_um,
        covariance_phi_deg2: fit.covariance_phi_deg2.is_finite().then_some(fit.covariance_phi_deg2),
        gamma_used: fit.gamma_used,
        delta_x_used_um: fit.delta_x_used_um,
        joint: cfg.fit.joint,
        linear_fit: LinearFitReport {
            slope_um_per_deg: linear.slope_um_per_deg,
            intercept_um: linear.intercept_um,
            beta_min_deg: linear.beta_range_deg.0,
            beta_max_deg: linear.beta_range_deg.1,
            r_squared: linear.r_squared,
            points: linear.points,
        },
        resolution_arcmin: cfg.fit.resolution_arcmin,
        sensitivity_um,
        records: records.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub slope_um_per_deg: f64,
    pub resolution_arcmin: f64,
    pub sensitivity_um: f64,
}

pub fn sensitivity_for_slope(slope_um_per_deg: f64, resolution_arcmin: f64) -> Result<SensitivityReport, Error> {
    if !slope_um_per_deg.is_finite() {
        return Err(ConfigError::invalid("slope", "must be finite").into());
    }
    let fit = inference::LinearFit {
        slope_um_per_deg,
        intercept_um: 0.0,
        beta_range_deg: (0.0, 0.0),
        r_squared: 1.0,
        points: 0,
    };
    Ok(SensitivityReport {
        slope_um_per_deg,
        resolution_arcmin,
        sensitivity_um: inference::sensitivity(&fit, inference::arcmin_to_deg(resolution_arcmin))?,
    })
}
