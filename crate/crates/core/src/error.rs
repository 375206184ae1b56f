use crate::config::ConfigError;
use crate::detector::{DetectorError, PgmError};
use crate::geometry::GeometryError;
use crate::inference::InferenceError;
use crate::io::SchemaError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: configuration, arguments, file schema, too little data.
    Validation,
    /// The inputs are well-formed but the model or estimator breaks down.
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Model(ModelError::DegenerateProjection { .. })
            | Error::Detector(DetectorError::EmptyFrame { .. })
            | Error::Detector(DetectorError::Model(ModelError::DegenerateProjection { .. }))
            | Error::Inference(InferenceError::NonIdentifiable)
            | Error::Inference(InferenceError::Model(ModelError::DegenerateProjection { .. })) => {
                ErrorKind::Numerical
            }
            Error::Io(_) | Error::Pgm(PgmError::Io(_)) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
