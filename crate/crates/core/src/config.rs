//! Run configuration in a flat `key = value` text format.
//!
//! Keys are dotted (`beam.width_um`); `#` starts a comment; blank lines are
//! ignored. Every key is optional and falls back to the operating-point
//! default. Writing a config and parsing it back yields an equal value:
//! floats are emitted in shortest round-trip form.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::{Background, CcdConfig, CentroidOptions, DEFAULT_MIN_TOTAL_COUNTS};
use crate::geometry::{self, TbdGeometry};
use crate::inference::{FitOptions, DEFAULT_CENTROID_SIGMA_UM};
use crate::model::{BeamParams, DisplacerState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {key} = {value:?}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    Analytic,
    Ccd,
}

impl FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(SweepMode::Analytic),
            "ccd" => Ok(SweepMode::Ccd),
            other => Err(format!("expected analytic|ccd, found {other:?}")),
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Analytic => "analytic",
            SweepMode::Ccd => "ccd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub peak_amplitude: f64,
    pub width_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Half-separation; when absent it is derived from `geometry.theta_deg`.
    pub delta_x_um: Option<f64>,
    pub phi_deg: f64,
    /// Overrides `exp(−Δx²/w²)` when present.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub theta_deg: Option<f64>,
    pub mirror_distance_cm: f64,
    pub pbs_size_cm: f64,
    pub displacement_coefficient_mm_per_deg: f64,
    pub linear_cap_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdSection {
    pub cols: usize,
    pub rows: usize,
    pub pixel_pitch_um: f64,
    pub full_well: u16,
    pub nd_attenuation_db: f64,
    pub noise_rms: f64,
    pub origin_offset_um: f64,
    /// `border` subtracts the mean of the frame margin before centroiding.
    pub background_border: bool,
    pub border_margin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub beta_start_deg: f64,
    pub beta_stop_deg: f64,
    pub beta_step_deg: f64,
    /// Error bar attached to analytic rows.
    pub centroid_sigma_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub betas_deg: Vec<f64>,
    pub points: usize,
    /// Half-range of the sampled window, in units of `w`.
    pub half_range_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub linear_min_deg: f64,
    pub linear_max_deg: f64,
    pub lambda_um: f64,
    pub resolution_arcmin: f64,
    /// Fit `Δx` jointly with `φ`.
    pub joint: bool,
    pub grid_step_deg: f64,
    pub tolerance_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub device: DeviceConfig,
    pub geometry: GeometryConfig,
    pub ccd: CcdSection,
    pub sweep: SweepConfig,
    pub profile: ProfileConfig,
    pub fit: FitConfig,
    pub output_path: Option<String>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ccd = CcdConfig::default();
        let geom = TbdGeometry::default();
        Self {
            beam: BeamConfig {
                peak_amplitude: 1.0,
                width_um: 600.0,
            },
            device: DeviceConfig {
                delta_x_um: Some(120.0),
                phi_deg: 54.0,
                gamma: None,
            },
            geometry: GeometryConfig {
                theta_deg: None,
                mirror_distance_cm: geom.mirror_distance_cm,
                pbs_size_cm: geom.pbs_size_cm,
                displacement_coefficient_mm_per_deg: geom.displacement_coefficient_mm_per_deg,
                linear_cap_deg: geom.linear_cap_deg,
            },
            ccd: CcdSection {
                cols: ccd.cols,
                rows: ccd.rows,
                pixel_pitch_um: ccd.pixel_pitch_um,
                full_well: ccd.full_well,
                nd_attenuation_db: ccd.nd_attenuation_db,
                noise_rms: ccd.noise_rms,
                origin_offset_um: 0.0,
                background_border: true,
                border_margin: 16,
            },
            sweep: SweepConfig {
                mode: SweepMode::Analytic,
                beta_start_deg: 0.0,
                beta_stop_deg: 90.0,
                beta_step_deg: 10.0,
                centroid_sigma_um: DEFAULT_CENTROID_SIGMA_UM,
            },
            profile: ProfileConfig {
                betas_deg: vec![30.0, 45.0, 60.0],
                points: 513,
                half_range_w: 4.0,
            },
            fit: FitConfig {
                linear_min_deg: 0.0,
                linear_max_deg: 90.0,
                lambda_um: 0.6328,
                resolution_arcmin: 10.0,
                joint: false,
                grid_step_deg: 1.0,
                tolerance_deg: 0.01,
            },
            output_path: None,
            seed: 0,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{v} must be finite and > 0")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{v} must be finite")))
    }
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(text.parse()?)
    }

    /// Checks every field and reports the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("beam.peak_amplitude", self.beam.peak_amplitude)?;
        positive("beam.width_um", self.beam.width_um)?;
        if let Some(dx) = self.device.delta_x_um {
            if !(dx.is_finite() && dx >= 0.0) {
                return Err(ConfigError::invalid("device.delta_x_um", format!("{dx} must be finite and >= 0")));
            }
        }
        finite("device.phi_deg", self.device.phi_deg)?;
        if let Some(g) = self.device.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(ConfigError::invalid("device.gamma", format!("{g} must lie in (0, 1]")));
            }
        }
        if let Some(t) = self.geometry.theta_deg {
            finite("geometry.theta_deg", t)?;
        }
        positive("geometry.mirror_distance_cm", self.geometry.mirror_distance_cm)?;
        positive("geometry.pbs_size_cm", self.geometry.pbs_size_cm)?;
        positive(
            "geometry.displacement_coefficient_mm_per_deg",
            self.geometry.displacement_coefficient_mm_per_deg,
        )?;
        positive("geometry.linear_cap_deg", self.geometry.linear_cap_deg)?;
        if self.device.delta_x_um.is_none() && self.geometry.theta_deg.is_none() {
            return Err(ConfigError::invalid(
                "device.delta_x_um",
                "set device.delta_x_um or geometry.theta_deg",
            ));
        }

        if self.ccd.cols == 0 {
            return Err(ConfigError::invalid("ccd.cols", "must be >= 1"));
        }
        if self.ccd.rows == 0 {
            return Err(ConfigError::invalid("ccd.rows", "must be >= 1"));
        }
        positive("ccd.pixel_pitch_um", self.ccd.pixel_pitch_um)?;
        if self.ccd.full_well == 0 {
            return Err(ConfigError::invalid("ccd.full_well", "must be >= 1"));
        }
        if !(self.ccd.nd_attenuation_db.is_finite() && self.ccd.nd_attenuation_db >= 0.0) {
            return Err(ConfigError::invalid("ccd.nd_attenuation_db", "must be finite and >= 0"));
        }
        if !(self.ccd.noise_rms.is_finite() && self.ccd.noise_rms >= 0.0) {
            return Err(ConfigError::invalid("ccd.noise_rms", "must be finite and >= 0"));
        }
        finite("ccd.origin_offset_um", self.ccd.origin_offset_um)?;

        finite("sweep.beta_start_deg", self.sweep.beta_start_deg)?;
        finite("sweep.beta_stop_deg", self.sweep.beta_stop_deg)?;
        positive("sweep.beta_step_deg", self.sweep.beta_step_deg)?;
        positive("sweep.centroid_sigma_um", self.sweep.centroid_sigma_um)?;

        if self.profile.betas_deg.is_empty() {
            return Err(ConfigError::invalid("profile.betas_deg", "must list at least one angle"));
        }
        for &b in &self.profile.betas_deg {
            finite("profile.betas_deg", b)?;
        }
        if self.profile.points < 2 {
            return Err(ConfigError::invalid("profile.points", "must be >= 2"));
        }
        positive("profile.half_range_w", self.profile.half_range_w)?;

        finite("fit.linear_min_deg", self.fit.linear_min_deg)?;
        finite("fit.linear_max_deg", self.fit.linear_max_deg)?;
        if self.fit.linear_min_deg > self.fit.linear_max_deg {
            return Err(ConfigError::invalid("fit.linear_max_deg", "must be >= fit.linear_min_deg"));
        }
        positive("fit.lambda_um", self.fit.lambda_um)?;
        if !(self.fit.resolution_arcmin.is_finite() && self.fit.resolution_arcmin >= 0.0) {
            return Err(ConfigError::invalid("fit.resolution_arcmin", "must be finite and >= 0"));
        }
        positive("fit.grid_step_deg", self.fit.grid_step_deg)?;
        positive("fit.tolerance_deg", self.fit.tolerance_deg)?;
        Ok(())
    }

    pub fn beam_params(&self) -> Result<BeamParams, ConfigError> {
        BeamParams::new(self.beam.peak_amplitude, self.beam.width_um)
            .map_err(|e| ConfigError::invalid("beam", e.to_string()))
    }

    pub fn tbd_geometry(&self) -> TbdGeometry {
        TbdGeometry {
            theta_deg: self.geometry.theta_deg.unwrap_or(0.0),
            mirror_distance_cm: self.geometry.mirror_distance_cm,
            pbs_size_cm: self.geometry.pbs_size_cm,
            displacement_coefficient_mm_per_deg: self.geometry.displacement_coefficient_mm_per_deg,
            linear_cap_deg: self.geometry.linear_cap_deg,
        }
    }

    /// `Δx` from `device.delta_x_um`, or from the platform rotation. A
    /// negative rotation gives the same beam pair mirrored, so its magnitude
    /// is used.
    pub fn delta_x_um(&self) -> Result<f64, crate::Error> {
        match self.device.delta_x_um {
            Some(dx) => Ok(dx),
            None => Ok(geometry::theta_to_delta_x(&self.tbd_geometry())?.abs()),
        }
    }

    pub fn displacer(&self) -> Result<(BeamParams, DisplacerState), crate::Error> {
        self.validate()?;
        let beam = self.beam_params()?;
        let dx = self.delta_x_um()?;
        let phi = self.device.phi_deg.to_radians();
        let dev = match self.device.gamma {
            Some(g) => DisplacerState::with_gamma(dx, phi, g)?,
            None => DisplacerState::new(&beam, dx, phi)?,
        };
        Ok((beam, dev))
    }

    /// Detector settings for a frame; `seed` feeds the noise generator.
    pub fn ccd_config(&self, seed: u64) -> CcdConfig {
        CcdConfig {
            cols: self.ccd.cols,
            rows: self.ccd.rows,
            pixel_pitch_um: self.ccd.pixel_pitch_um,
            full_well: self.ccd.full_well,
            nd_attenuation_db: self.ccd.nd_attenuation_db,
            noise_rms: self.ccd.noise_rms,
            rng_seed: seed,
        }
    }

    pub fn centroid_options(&self) -> CentroidOptions {
        CentroidOptions {
            background: if self.ccd.background_border {
                Background::BorderMean {
                    margin: self.ccd.border_margin,
                }
            } else {
                Background::None
            },
            min_total_counts: DEFAULT_MIN_TOTAL_COUNTS,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            grid_step_deg: self.fit.grid_step_deg,
            tolerance_deg: self.fit.tolerance_deg,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_value(line, key, item.trim()))
        .collect()
}

fn parse_background(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "border" => Ok(true),
        "none" => Ok(false),
        _ => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected border|none".into(),
        }),
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let opt = |v: &str| -> Result<Option<f64>, ConfigError> {
                if v.is_empty() {
                    Ok(None)
                } else {
                    parse_value(line, key, v).map(Some)
                }
            };
            match key {
                "beam.peak_amplitude" => cfg.beam.peak_amplitude = parse_value(line, key, value)?,
                "beam.width_um" => cfg.beam.width_um = parse_value(line, key, value)?,
                "device.delta_x_um" => cfg.device.delta_x_um = opt(value)?,
                "device.phi_deg" => cfg.device.phi_deg = parse_value(line, key, value)?,
                "device.gamma" => cfg.device.gamma = opt(value)?,
                "geometry.theta_deg" => cfg.geometry.theta_deg = opt(value)?,
                "geometry.mirror_distance_cm" => cfg.geometry.mirror_distance_cm = parse_value(line, key, value)?,
                "geometry.pbs_size_cm" => cfg.geometry.pbs_size_cm = parse_value(line, key, value)?,
                "geometry.displacement_coefficient_mm_per_deg" => {
                    cfg.geometry.displacement_coefficient_mm_per_deg = parse_value(line, key, value)?
                }
                "geometry.linear_cap_deg" => cfg.geometry.linear_cap_deg = parse_value(line, key, value)?,
                "ccd.cols" => cfg.ccd.cols = parse_value(line, key, value)?,
                "ccd.rows" => cfg.ccd.rows = parse_value(line, key, value)?,
                "ccd.pixel_pitch_um" => cfg.ccd.pixel_pitch_um = parse_value(line, key, value)?,
                "ccd.full_well" => cfg.ccd.full_well = parse_value(line, key, value)?,
                "ccd.nd_attenuation_db" => cfg.ccd.nd_attenuation_db = parse_value(line, key, value)?,
                "ccd.noise_rms" => cfg.ccd.noise_rms = parse_value(line, key, value)?,
                "ccd.origin_offset_um" => cfg.ccd.origin_offset_um = parse_value(line, key, value)?,
                "ccd.background" => cfg.ccd.background_border = parse_background(line, key, value)?,
                "ccd.border_margin" => cfg.ccd.border_margin = parse_value(line, key, value)?,
                "sweep.mode" => cfg.sweep.mode = parse_value(line, key, value)?,
                "sweep.beta_start_deg" => cfg.sweep.beta_start_deg = parse_value(line, key, value)?,
                "sweep.beta_stop_deg" => cfg.sweep.beta_stop_deg = parse_value(line, key, value)?,
                "sweep.beta_step_deg" => cfg.sweep.beta_step_deg = parse_value(line, key, value)?,
                "sweep.centroid_sigma_um" => cfg.sweep.centroid_sigma_um = parse_value(line, key, value)?,
                "profile.betas_deg" => cfg.profile.betas_deg = parse_list(line, key, value)?,
                "profile.points" => cfg.profile.points = parse_value(line, key, value)?,
                "profile.half_range_w" => cfg.profile.half_range_w = parse_value(line, key, value)?,
                "fit.linear_min_deg" => cfg.fit.linear_min_deg = parse_value(line, key, value)?,
                "fit.linear_max_deg" => cfg.fit.linear_max_deg = parse_value(line, key, value)?,
                "fit.lambda_um" => cfg.fit.lambda_um = parse_value(line, key, value)?,
                "fit.resolution_arcmin" => cfg.fit.resolution_arcmin = parse_value(line, key, value)?,
                "fit.joint" => cfg.fit.joint = parse_value(line, key, value)?,
                "fit.grid_step_deg" => cfg.fit.grid_step_deg = parse_value(line, key, value)?,
                "fit.tolerance_deg" => cfg.fit.tolerance_deg = parse_value(line, key, value)?,
                "output.path" => cfg.output_path = (!value.is_empty()).then(|| value.to_string()),
                "rng.seed" => cfg.seed = parse_value(line, key, value)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        writeln!(f, "beam.peak_amplitude = {}", self.beam.peak_amplitude)?;
        writeln!(f, "beam.width_um = {}", self.beam.width_um)?;
        writeln!(f, "device.delta_x_um = {}", opt(self.device.delta_x_um))?;
        writeln!(f, "device.phi_deg = {}", self.device.phi_deg)?;
        writeln!(f, "device.gamma = {}", opt(self.device.gamma))?;
        writeln!(f, "geometry.theta_deg = {}", opt(self.geometry.theta_deg))?;
        writeln!(f, "geometry.mirror_distance_cm = {}", self.geometry.mirror_distance_cm)?;
        writeln!(f, "geometry.pbs_size_cm = {}", self.geometry.pbs_size_cm)?;
        writeln!(
            f,
            "geometry.displacement_coefficient_mm_per_deg = {}",
            self.geometry.displacement_coefficient_mm_per_deg
        )?;
        writeln!(f, "geometry.linear_cap_deg = {}", self.geometry.linear_cap_deg)?;
        writeln!(f, "ccd.cols = {}", self.ccd.cols)?;
        writeln!(f, "ccd.rows = {}", self.ccd.rows)?;
        writeln!(f, "ccd.pixel_pitch_um = {}", self.ccd.pixel_pitch_um)?;
        writeln!(f, "ccd.full_well = {}", self.ccd.full_well)?;
        writeln!(f, "ccd.nd_attenuation_db = {}", self.ccd.nd_attenuation_db)?;
        writeln!(f, "ccd.noise_rms = {}", self.ccd.noise_rms)?;
        writeln!(f, "ccd.origin_offset_um = {}", self.ccd.origin_offset_um)?;
        writeln!(
            f,
            "ccd.background = {}",
            if self.ccd.background_border { "border" } else { "none" }
        )?;
        writeln!(f, "ccd.border_margin = {}", self.ccd.border_margin)?;
        writeln!(f, "sweep.mode = {}", self.sweep.mode)?;
        writeln!(f, "sweep.beta_start_deg = {}", self.sweep.beta_start_deg)?;
        writeln!(f, "sweep.beta_stop_deg = {}", self.sweep.beta_stop_deg)?;
        writeln!(f, "sweep.beta_step_deg = {}", self.sweep.beta_step_deg)?;
        writeln!(f, "sweep.centroid_sigma_um = {}", self.sweep.centroid_sigma_um)?;
        let betas: Vec<String> = self.profile.betas_deg.iter().map(f64::to_string).collect();
        writeln!(f, "profile.betas_deg = {}", betas.join(","))?;
        writeln!(f, "profile.points = {}", self.profile.points)?;
        writeln!(f, "profile.half_range_w = {}", self.profile.half_range_w)?;
        writeln!(f, "fit.linear_min_deg = {}", self.fit.linear_min_deg)?;
        writeln!(f, "fit.linear_max_deg = {}", self.fit.linear_max_deg)?;
        writeln!(f, "fit.lambda_um = {}", self.fit.lambda_um)?;
        writeln!(f, "fit.resolution_arcmin = {}", self.fit.resolution_arcmin)?;
        writeln!(f, "fit.joint = {}", self.fit.joint)?;
        writeln!(f, "fit.grid_step_deg = {}", self.fit.grid_step_deg)?;
        writeln!(f, "fit.tolerance_deg = {}", self.fit.tolerance_deg)?;
        writeln!(f, "output.path = {}", self.output_path.as_deref().unwrap_or(""))?;
        writeln!(f, "rng.seed = {}", self.seed)
    }
}
