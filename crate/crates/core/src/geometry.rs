//! Rotation angle to beam displacement, and the overlap classifier.
//!
//! The displacer is a PBS with two mirrors on a rotating platform. For small
//! rotations the separation of the two output beams grows linearly with the
//! rotation angle; only that linear regime is modelled.

use serde::{Deserialize, Serialize};

use crate::model::BeamParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("|theta| = {theta_deg}° exceeds the linear-model limit of {cap_deg}°")]
    OutOfLinearRange { theta_deg: f64, cap_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbdGeometry {
    pub theta_deg: f64,
    pub mirror_distance_cm: f64,
    pub pbs_size_cm: f64,
    /// Beam separation per degree of platform rotation, in mm/deg.
    pub displacement_coefficient_mm_per_deg: f64,
    /// Largest |θ| for which the linear model is trusted.
    pub linear_cap_deg: f64,
}

impl Default for TbdGeometry {
    fn default() -> Self {
        Self {
            theta_deg: 0.0,
            mirror_distance_cm: 7.0,
            pbs_size_cm: 1.0,
            displacement_coefficient_mm_per_deg: 5.0,
            linear_cap_deg: 2.0,
        }
    }
}

impl TbdGeometry {
    pub fn with_theta(theta_deg: f64) -> Self {
        Self {
            theta_deg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let checks = [
            ("mirror_distance_cm", self.mirror_distance_cm),
            ("pbs_size_cm", self.pbs_size_cm),
            ("displacement_coefficient_mm_per_deg", self.displacement_coefficient_mm_per_deg),
            ("linear_cap_deg", self.linear_cap_deg),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and > 0",
                });
            }
        }
        if !self.theta_deg.is_finite() {
            return Err(GeometryError::InvalidParameter {
                name: "theta_deg",
                value: self.theta_deg,
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

/// Half-separation `Δx` (µm) produced by the platform rotation. Signed: a
/// negative rotation swaps which polarization moves to `+x`.
pub fn theta_to_delta_x(geom: &TbdGeometry) -> Result<f64, GeometryError> {
    geom.validate()?;
    if geom.theta_deg.abs() > geom.linear_cap_deg {
        return Err(GeometryError::OutOfLinearRange {
            theta_deg: geom.theta_deg,
            cap_deg: geom.linear_cap_deg,
        });
    }
    let separation_um = geom.displacement_coefficient_mm_per_deg * 1000.0 * geom.theta_deg;
    Ok(0.5 * separation_um)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapRegime {
    Overlapping,
    Separated,
}

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 1.0;

/// Classifies by the ratio of the beam separation `2|Δx|` to the width `w`.
pub fn overlap_regime(beam: &BeamParams, delta_x_um: f64, threshold: f64) -> Result<OverlapRegime, GeometryError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(GeometryError::InvalidParameter {
            name: "threshold",
            value: threshold,
            reason: "must lie in (0, 1]",
        });
    }
    let ratio = 2.0 * delta_x_um.abs() / beam.width_um();
    Ok(if ratio <= threshold {
        OverlapRegime::Overlapping
    } else {
        OverlapRegime::Separated
    })
}
