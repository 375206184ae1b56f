//! CCD frame synthesis and centroid estimation.
//!
//! A frame is a row-major grid of 16-bit counts. Column `c` of a frame with
//! `cols` columns sits at lab-frame `x = origin_offset + (c − (cols−1)/2)·pitch`;
//! rows are centred on `y = 0` the same way. Each pixel samples the intensity
//! at its centre and multiplies by the pixel area. For the operating point
//! (`pitch/w ≈ 0.015`) the difference from a true area integral is far below
//! the one-pixel error bar.

mod pgm;

pub use pgm::{read_pgm, write_pgm, PgmError};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{self, BeamParams, DisplacerState, ModelError, PostSelection};

/// The brightest pixel of the unattenuated β = 45° frame is scaled to this
/// fraction of the full well.
pub const PEAK_FILL_FRACTION: f64 = 0.8;

/// Frames whose (background-corrected) total is below this are rejected.
pub const DEFAULT_MIN_TOTAL_COUNTS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("invalid CCD setting {name}: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("frame total of {total} counts is below the floor of {floor}; the beam is over-attenuated or missing")]
    EmptyFrame { total: f64, floor: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdConfig {
    pub cols: usize,
    pub rows: usize,
    pub pixel_pitch_um: f64,
    /// Saturation level; also the largest representable count.
    pub full_well: u16,
    pub nd_attenuation_db: f64,
    /// RMS of the additive Gaussian read noise, in counts.
    pub noise_rms: f64,
    pub rng_seed: u64,
}

impl Default for CcdConfig {
    fn default() -> Self {
        Self {
            cols: 1530,
            rows: 1020,
            pixel_pitch_um: 9.0,
            full_well: u16::MAX,
            nd_attenuation_db: 0.0,
            noise_rms: 0.0,
            rng_seed: 0,
        }
    }
}

impl CcdConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |name, reason: &str| {
            Err(DetectorError::InvalidConfig {
                name,
                reason: reason.to_string(),
            })
        };
        if self.cols == 0 {
            return bad("cols", "must be >= 1");
        }
        if self.rows == 0 {
            return bad("rows", "must be >= 1");
        }
        if !(self.pixel_pitch_um.is_finite() && self.pixel_pitch_um > 0.0) {
            return bad("pixel_pitch_um", "must be finite and > 0");
        }
        if self.full_well == 0 {
            return bad("full_well", "must be > 0");
        }
        if !(self.nd_attenuation_db.is_finite() && self.nd_attenuation_db >= 0.0) {
            return bad("nd_attenuation_db", "must be finite and >= 0");
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            return bad("noise_rms", "must be finite and >= 0");
        }
        Ok(())
    }

    /// Linear transmission of the ND filter stack.
    pub fn attenuation(&self) -> f64 {
        10f64.powf(-self.nd_attenuation_db / 10.0)
    }

    fn column_offset_um(&self, col: usize) -> f64 {
        (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pixel_pitch_um
    }

    fn row_y_um(&self, row: usize) -> f64 {
        (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pixel_pitch_um
    }
}

/// Clipping happened while the frame was synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaturationWarning {
    pub saturated_pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    data: Vec<u16>,
    config: CcdConfig,
    origin_offset_um: f64,
    saturated_pixels: usize,
}

impl Frame {
    /// Wraps raw row-major counts.
    pub fn from_counts(data: Vec<u16>, config: CcdConfig, origin_offset_um: f64) -> Result<Self, DetectorError> {
        config.validate()?;
        if data.len() != config.rows * config.cols {
            return Err(DetectorError::InvalidConfig {
                name: "data",
                reason: format!("{} samples for a {}x{} frame", data.len(), config.cols, config.rows),
            });
        }
        if let Some(v) = data.iter().find(|&&v| v > config.full_well) {
            return Err(DetectorError::InvalidConfig {
                name: "data",
                reason: format!("count {v} exceeds full well {}", config.full_well),
            });
        }
        if !origin_offset_um.is_finite() {
            return Err(DetectorError::InvalidConfig {
                name: "origin_offset_um",
                reason: "must be finite".into(),
            });
        }
        let saturated_pixels = data.iter().filter(|&&v| v == config.full_well).count();
        Ok(Self {
            data,
            config,
            origin_offset_um,
            saturated_pixels,
        })
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn config(&self) -> &CcdConfig {
        &self.config
    }

    pub fn origin_offset_um(&self) -> f64 {
        self.origin_offset_um
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.config.cols + col]
    }

    pub fn row(&self, row: usize) -> &[u16] {
        let cols = self.config.cols;
        &self.data[row * cols..(row + 1) * cols]
    }

    /// Lab-frame x of a pixel column centre.
    pub fn column_x_um(&self, col: usize) -> f64 {
        self.origin_offset_um + self.config.column_offset_um(col)
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated_pixels > 0
    }

    pub fn saturation_warning(&self) -> Option<SaturationWarning> {
        (self.saturated_pixels > 0).then_some(SaturationWarning {
            saturated_pixels: self.saturated_pixels,
        })
    }

    pub fn total_counts(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum()
    }
}

/// Separable pre-gain exposure: per-column `|E(x, 0)|²·pitch²` and per-row
/// `exp(−y²/w²)`.
struct Exposure {
    columns: Vec<f64>,
    rows: Vec<f64>,
}

impl Exposure {
    fn new(
        beam: &BeamParams,
        cfg: &CcdConfig,
        origin_offset_um: f64,
        column_intensity: impl Fn(f64) -> f64,
    ) -> Self {
        let area = cfg.pixel_pitch_um * cfg.pixel_pitch_um;
        let columns = (0..cfg.cols)
            .map(|c| column_intensity(origin_offset_um + cfg.column_offset_um(c)) * area)
            .collect();
        let w = beam.width_um();
        let rows = (0..cfg.rows)
            .map(|r| {
                let s = cfg.row_y_um(r) / w;
                (-s * s).exp()
            })
            .collect();
        Self { columns, rows }
    }

    fn peak(&self) -> f64 {
        let col = self.columns.iter().copied().fold(0.0, f64::max);
        let row = self.rows.iter().copied().fold(0.0, f64::max);
        col * row
    }

    fn total(&self) -> f64 {
        self.columns.iter().sum::<f64>() * self.rows.iter().sum::<f64>()
    }
}

fn post_selected_exposure(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    cfg: &CcdConfig,
    origin_offset_um: f64,
) -> Exposure {
    Exposure::new(beam, cfg, origin_offset_um, |x| {
        model::output_field(beam, dev, ps, x, 0.0).norm_sqr()
    })
}

/// Gain that puts the brightest pixel of the unattenuated β = 45° frame of
/// this device at [`PEAK_FILL_FRACTION`] of the full well.
pub fn peak_gain(
    beam: &BeamParams,
    dev: &DisplacerState,
    cfg: &CcdConfig,
    origin_offset_um: f64,
) -> Result<f64, DetectorError> {
    cfg.validate()?;
    let peak = post_selected_exposure(beam, dev, &PostSelection::from_degrees(45.0), cfg, origin_offset_um).peak();
    if !(peak > 0.0) {
        return Err(DetectorError::InvalidConfig {
            name: "gain",
            reason: "the beta = 45° frame has no signal on the sensor".into(),
        });
    }
    Ok(PEAK_FILL_FRACTION * f64::from(cfg.full_well) / peak)
}

/// Noise-free, unclipped counts `G·T_nd·I(x, y)·pitch²`, row-major.
pub fn expected_counts(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    cfg: &CcdConfig,
    origin_offset_um: f64,
    gain: f64,
) -> Result<Vec<f64>, DetectorError> {
    cfg.validate()?;
    let exposure = post_selected_exposure(beam, dev, ps, cfg, origin_offset_um);
    let scale = gain * cfg.attenuation();
    let mut out = Vec::with_capacity(cfg.rows * cfg.cols);
    for &ry in &exposure.rows {
        out.extend(exposure.columns.iter().map(|&cx| scale * cx * ry));
    }
    Ok(out)
}

/// Counts the input beam (no output polarizer) would deposit on the sensor,
/// before rounding or clipping. Reference for measured insertion loss.
pub fn input_reference_counts(beam: &BeamParams, cfg: &CcdConfig, origin_offset_um: f64, gain: f64) -> f64 {
    let exposure = Exposure::new(beam, cfg, origin_offset_um, |x| model::input_intensity(beam, x));
    gain * cfg.attenuation() * exposure.total()
}

/// Synthesizes a frame with the gain from [`peak_gain`].
pub fn synthesize_frame(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    cfg: &CcdConfig,
    origin_offset_um: f64,
) -> Result<Frame, DetectorError> {
    let gain = peak_gain(beam, dev, cfg, origin_offset_um)?;
    synthesize_frame_with_gain(beam, dev, ps, cfg, origin_offset_um, gain)
}

/// Synthesizes a frame with an explicit gain, so a sweep can share one
/// exposure setting across polarizer angles.
pub fn synthesize_frame_with_gain(
    beam: &BeamParams,
    dev: &DisplacerState,
    ps: &PostSelection,
    cfg: &CcdConfig,
    origin_offset_um: f64,
    gain: f64,
) -> Result<Frame, DetectorError> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(DetectorError::InvalidConfig {
            name: "gain",
            reason: format!("{gain} is not a positive finite gain"),
        });
    }
    let mut counts = expected_counts(beam, dev, ps, cfg, origin_offset_um, gain)?;
    if cfg.noise_rms > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let noise = Normal::new(0.0, cfg.noise_rms).map_err(|e| DetectorError::InvalidConfig {
            name: "noise_rms",
            reason: e.to_string(),
        })?;
        for v in counts.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let full_well = f64::from(cfg.full_well);
    let data = counts
        .into_iter()
        .map(|v| v.round().clamp(0.0, full_well) as u16)
        .collect();
    Frame::from_counts(data, *cfg, origin_offset_um)
}

/// How a constant background level is removed before taking moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    /// Raw counts are used as weights.
    None,
    /// The mean of all pixels within `margin` pixels of the frame edge is
    /// subtracted from every pixel. Residuals may be negative.
    BorderMean { margin: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidOptions {
    pub background: Background,
    pub min_total_counts: f64,
}

impl Default for CentroidOptions {
    fn default() -> Self {
        Self {
            background: Background::None,
            min_total_counts: DEFAULT_MIN_TOTAL_COUNTS,
        }
    }
}

impl CentroidOptions {
    pub fn border_mean(margin: usize) -> Self {
        Self {
            background: Background::BorderMean { margin },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidEstimate {
    /// Lab-frame x centroid, µm.
    pub x_um: f64,
    /// One pixel pitch, the quantization error bar.
    pub sigma_um: f64,
    /// Total weight after background removal.
    pub total_counts: f64,
    pub background: f64,
}

/// Intensity-weighted mean column position, in lab-frame µm.
pub fn estimate_centroid(frame: &Frame) -> Result<CentroidEstimate, DetectorError> {
    estimate_centroid_with(frame, &CentroidOptions::default())
}

pub fn estimate_centroid_with(frame: &Frame, opts: &CentroidOptions) -> Result<CentroidEstimate, DetectorError> {
    let cfg = frame.config();
    let background = match opts.background {
        Background::None => 0.0,
        Background::BorderMean { margin } => border_mean(frame, margin),
    };

    let mut column_sums = vec![0.0f64; cfg.cols];
    for r in 0..cfg.rows {
        for (acc, &v) in column_sums.iter_mut().zip(frame.row(r)) {
            *acc += f64::from(v);
        }
    }
    let rows = cfg.rows as f64;
    let mut total = 0.0;
    let mut first_moment = 0.0;
    for (c, s) in column_sums.into_iter().enumerate() {
        let weight = s - background * rows;
        total += weight;
        first_moment += c as f64 * weight;
    }
    if !(total >= opts.min_total_counts) {
        return Err(DetectorError::EmptyFrame {
            total,
            floor: opts.min_total_counts,
        });
    }
    let centroid_col = first_moment / total;
    let x_um = frame.origin_offset_um() + (centroid_col - (cfg.cols as f64 - 1.0) / 2.0) * cfg.pixel_pitch_um;
    Ok(CentroidEstimate {
        x_um,
        sigma_um: cfg.pixel_pitch_um,
        total_counts: total,
        background,
    })
}

fn border_mean(frame: &Frame, margin: usize) -> f64 {
    let cfg = frame.config();
    let margin = margin.max(1);
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..cfg.rows {
        let edge_row = r < margin || r + margin >= cfg.rows;
        for (c, &v) in frame.row(r).iter().enumerate() {
            if edge_row || c < margin || c + margin >= cfg.cols {
                sum += f64::from(v);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
