//! Simulation and parameter inference for a tunable beam displacer driven by
//! polarization post-selection.
//!
//! - [`model`]: closed-form output field, intensity, centroid and insertion loss.
//! - [`geometry`]: platform rotation to displacement, overlap regime.
//! - [`detector`]: CCD frame synthesis, centroiding, graymap export.
//! - [`inference`]: phase fit, linear-region fit, sensitivity, loss curves.
//! - [`config`], [`io`], [`pipeline`]: run configuration, CSV/JSON formats and
//!   the end-to-end commands behind the CLI.

pub mod config;
pub mod detector;
mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod model;
pub mod pipeline;

pub use config::{RunConfig, SweepMode};
pub use detector::{CcdConfig, CentroidEstimate, Frame};
pub use error::{Error, ErrorKind};
pub use geometry::{OverlapRegime, TbdGeometry};
pub use inference::{FitResult, KnownParams, LinearFit, SweepRecord};
pub use model::{BeamParams, DisplacerState, PostSelection, ProfileSample};
