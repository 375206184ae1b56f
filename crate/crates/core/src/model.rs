//! Closed-form forward model of the displacer.
//!
//! Two replicas of a Gaussian beam, displaced by `±Δx` with orthogonal
//! linear polarizations and a relative phase `φ`, are recombined and
//! projected onto a linear polarizer at angle `β`. Everything here is a pure
//! function of its value inputs.
//!
//! Conventions:
//! - `w` is the 1/e half-width of the field amplitude, so the input field is
//!   `E₀·exp[−(x²+y²)/(2w²)]` and the input intensity `I₀·exp[−(x²+y²)/w²]`
//!   with `I₀ = E₀²`.
//! - Lengths are in micrometres, `β` is stored in degrees, `φ` in radians.
//! - The y-dependence factors out of every 1-D quantity and is dropped.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Smallest accepted value of the projection factor `1 + γ·sin2β·cosφ`.
pub const DEGENERACY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// The post-selected beam carries (numerically) no power, so its centroid
    /// and insertion loss are undefined.
    #[error("degenerate projection: 1 + γ·sin2β·cosφ = {factor:e} is below tolerance")]
    DegenerateProjection { factor: f64 },
}

fn require(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}

/// Input Gaussian beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    peak_amplitude: f64,
    width_um: f64,
}

impl BeamParams {
    pub fn new(peak_amplitude: f64, width_um: f64) -> Result<Self, ModelError> {
        require(
            peak_amplitude.is_finite() && peak_amplitude > 0.0,
            "peak_amplitude",
            peak_amplitude,
            "must be finite and > 0",
        )?;
        require(
            width_um.is_finite() && width_um > 0.0,
            "width_um",
            width_um,
            "must be finite and > 0",
        )?;
        Ok(Self {
            peak_amplitude,
            width_um,
        })
    }

    /// Unit amplitude, `w = 600 µm`.
    pub fn operating_point() -> Self {
        Self {
            peak_amplitude: 1.0,
            width_um: 600.0,
        }
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.peak_amplitude
    }

    pub fn width_um(&self) -> f64 {
        self.width_um
    }

    /// `I₀ = E₀²`.
    pub fn peak_intensity(&self) -> f64 {
        self.peak_amplitude * self.peak_amplitude
    }
}

/// Displacer configuration: half-separation `Δx`, relative phase `φ` and the
/// overlap factor `γ` of the two displaced replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacerState {
    delta_x_um: f64,
    phase_phi_rad: f64,
    gamma: f64,
}

impl DisplacerState {
    /// Builds the state for `beam`, deriving `γ = exp(−Δx²/w²)`.
    pub fn new(beam: &BeamParams, delta_x_um: f64, phase_phi_rad: f64) -> Result<Self, ModelError> {
        Self::check_common(delta_x_um, phase_phi_rad)?;
        Ok(Self {
            delta_x_um,
            phase_phi_rad,
            gamma: gamma_of(beam, delta_x_um),
        })
    }

    /// Builds a state with an explicitly chosen overlap factor. Used when `γ`
    /// is quoted independently of the beam width, or fixed by a prior
    /// alignment step.
    pub fn with_gamma(delta_x_um: f64, phase_phi_rad: f64, gamma: f64) -> Result<Self, ModelError> {
        Self::check_common(delta_x_um, phase_phi_rad)?;
        require(
            gamma > 0.0 && gamma <= 1.0,
            "gamma",
            gamma,
            "must lie in (0, 1]",
        )?;
        Ok(Self {
            delta_x_um,
            phase_phi_rad,
            gamma,
        })
    }

    fn check_common(delta_x_um: f64, phase_phi_rad: f64) -> Result<(), ModelError> {
        require(
            delta_x_um.is_finite() && delta_x_um >= 0.0,
            "delta_x_um",
            delta_x_um,
            "must be finite and >= 0",
        )?;
        require(
            phase_phi_rad.is_finite(),
            "phase_phi",
            phase_phi_rad,
            "must be finite",
        )
    }

    pub fn delta_x_um(&self) -> f64 {
        self.delta_x_um
    }

    pub fn phase_phi_rad(&self) -> f64 {
        self.phase_phi_rad
    }

    pub fn phase_phi_deg(&self) -> f64 {
        self.phase_phi_rad.to_degrees()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Output polarizer angle, measured from the horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelection {
    beta_deg: f64,
}

impl PostSelection {
    pub fn from_degrees(beta_deg: f64) -> Self {
        Self { beta_deg }
    }

    pub fn beta_deg(&self) -> f64 {
        self.beta_deg
    }

    pub fn beta_rad(&self) -> f64 {
        self.beta_deg.to_radians()
    }

    /// `(sin2β, cos2β)`, exact when `2β` is a multiple of 90°.
    pub fn double_angle_sin_cos(&self) -> (f64, f64) {
        let d = (2.0 * self.beta_deg).rem_euclid(360.0);
        if d == 0.0 {
            (0.0, 1.0)
        } else if d == 90.0 {
            (1.0, 0.0)
        } else if d == 180.0 {
            (0.0, -1.0)
        } else if d == 270.0 {
            (-1.0, 0.0)
        } else {
            (2.0 * self.beta_rad()).sin_cos()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x_um: f64,
    pub intensity: f64,
}

/// `exp(−Δx²/w²)`, the overlap of the two displaced replicas.
pub fn gamma_of(beam: &BeamParams, delta_x_um: f64) -> f64 {
    let r = delta_x_um / beam.width_um;
    (-r * r).exp()
}

/// Complex field amplitude behind the output polarizer at `(x, y)`.
pub fn output_field(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    x_um: f64,
    y_um: f64,
) -> Complex64 {
    let (a, b) = replica_amplitudes(beam, dev, ps, x_um, y_um);
    (Complex64::from_polar(a, dev.phase_phi_rad) + b) * (beam.peak_amplitude / SQRT_2)
}

/// Polarizer-projected replica envelopes `cosβ·g(x−Δx)` and `sinβ·g(x+Δx)`,
/// without the `E₀/√2` prefactor.
fn replica_amplitudes(beam: &BeamParams, dev: &DisplacerState, ps: &PostSelection, x_um: f64, y_um: f64) -> (f64, f64) {
    let (sin_b, cos_b) = ps.beta_rad().sin_cos();
    let two_w2 = 2.0 * beam.width_um * beam.width_um;
    let dx = dev.delta_x_um;
    let y2 = y_um * y_um;
    (
        cos_b * (-((x_um - dx).powi(2) + y2) / two_w2).exp(),
        sin_b * (-((x_um + dx).powi(2) + y2) / two_w2).exp(),
    )
}

/// Output intensity along x, in the same units as `I₀ = E₀²`.
pub fn output_intensity(beam: &BeamParams, dev: &DisplacerState, ps: &PostSelection, x_um: f64) -> f64 {
    let (a, b) = replica_amplitudes(beam, dev, ps, x_um, 0.0);
    let (sin_p, cos_p) = dev.phase_phi_rad.sin_cos();
    // Written as |a·e^{iφ} + b|², which stays accurate where the replicas
    // interfere destructively. A γ that differs from the beam overlap only
    // rescales the cross term.
    let overlap = gamma_of(beam, dev.delta_x_um);
    let excess = if dev.gamma == overlap {
        0.0
    } else {
        let w2 = beam.width_um * beam.width_um;
        (dev.gamma - overlap) * ps.double_angle_sin_cos().0 * cos_p * (-x_um * x_um / w2).exp()
    };
    let re = a * cos_p + b;
    let im = a * sin_p;
    (0.5 * beam.peak_intensity() * (re * re + im * im + excess)).max(0.0)
}

/// Intensity of the input beam along x.
pub fn input_intensity(beam: &BeamParams, x_um: f64) -> f64 {
    let r = x_um / beam.width_um;
    beam.peak_intensity() * (-r * r).exp()
}

/// `1 + γ·sin2β·cosφ`; twice the transmitted power fraction.
pub fn projection_factor(dev: &DisplacerState, ps: &PostSelection) -> f64 {
    1.0 + dev.gamma * ps.double_angle_sin_cos().0 * dev.phase_phi_rad.cos()
}

fn checked_projection(dev: &DisplacerState, ps: &PostSelection, eps: f64) -> Result<f64, ModelError> {
    let factor = projection_factor(dev, ps);
    if factor <= eps {
        Err(ModelError::DegenerateProjection { factor })
    } else {
        Ok(factor)
    }
}

/// Amplification factor `A = cos2β / (1 + γ·sin2β·cosφ)`, the ratio of the
/// output centroid to `Δx`.
pub fn amplification_factor(dev: &DisplacerState, ps: &PostSelection) -> Result<f64, ModelError> {
    amplification_factor_with_tolerance(dev, ps, DEGENERACY_EPS)
}

pub fn amplification_factor_with_tolerance(
    dev: &DisplacerState,
    ps: &PostSelection,
    eps: f64,
) -> Result<f64, ModelError> {
    let factor = checked_projection(dev, ps, eps)?;
    Ok(ps.double_angle_sin_cos().1 / factor)
}

/// Centroid `⟨x⟩ = A·Δx` of the post-selected beam, in µm.
pub fn analytic_centroid(dev: &DisplacerState, ps: &PostSelection) -> Result<f64, ModelError> {
    analytic_centroid_with_tolerance(dev, ps, DEGENERACY_EPS)
}

pub fn analytic_centroid_with_tolerance(
    dev: &DisplacerState,
    ps: &PostSelection,
    eps: f64,
) -> Result<f64, ModelError> {
    Ok(amplification_factor_with_tolerance(dev, ps, eps)? * dev.delta_x_um)
}

/// Transmitted fraction `P_out/P_in = (1 + γ·sin2β·cosφ)/2`.
pub fn power_ratio(dev: &DisplacerState, ps: &PostSelection) -> f64 {
    0.5 * projection_factor(dev, ps)
}

/// Insertion loss `−10·log₁₀(P_out/P_in)` in dB.
pub fn insertion_loss_db(dev: &DisplacerState, ps: &PostSelection) -> Result<f64, ModelError> {
    insertion_loss_db_with_tolerance(dev, ps, DEGENERACY_EPS)
}

pub fn insertion_loss_db_with_tolerance(
    dev: &DisplacerState,
    ps: &PostSelection,
    eps: f64,
) -> Result<f64, ModelError> {
    let factor = checked_projection(dev, ps, eps)?;
    Ok(-10.0 * (0.5 * factor).log10())
}

/// Optical path difference `(φ/2π)·λ` for a phase reduced to `[0, 2π)`.
pub fn phase_to_path_difference(phi_rad: f64, wavelength_um: f64) -> Result<f64, ModelError> {
    require(
        wavelength_um.is_finite() && wavelength_um > 0.0,
        "wavelength_um",
        wavelength_um,
        "must be finite and > 0",
    )?;
    let mut reduced = phi_rad.rem_euclid(2.0 * PI);
    // rem_euclid may round up to exactly 2π for tiny negative inputs
    if reduced >= 2.0 * PI {
        reduced = 0.0;
    }
    Ok(reduced / (2.0 * PI) * wavelength_um)
}

/// Samples [`output_intensity`] on `points` evenly spaced abscissae over
/// `[-half_range, half_range]`.
pub fn sample_profile(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    half_range_um: f64,
    points: usize,
) -> Vec<ProfileSample> {
    if points == 0 {
        return Vec::new();
    }
    if points == 1 {
        return vec![ProfileSample {
            x_um: 0.0,
            intensity: output_intensity(beam, dev, ps, 0.0),
        }];
    }
    let step = 2.0 * half_range_um / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let x_um = -half_range_um + i as f64 * step;
            ProfileSample {
                x_um,
                intensity: output_intensity(beam, dev, ps, x_um),
            }
        })
        .collect()
}
