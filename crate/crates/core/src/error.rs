use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("invalid axes for {op}: {msg}")]
    Axis { op: &'static str, msg: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("imaginary residue {residue:e} after inverse DFT of a Hermitian spectrum")]
    ImaginaryResidue { residue: f64 },

    #[error("unsupported NRRD feature: {field} = {value}")]
    UnsupportedNrrd { field: String, value: String },

    #[error("malformed NRRD: {0}")]
    MalformedNrrd(String),

    #[error("NRRD payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("phantom geometry infeasible: {0}")]
    InfeasibleGeometry(String),

    #[error("invalid split request: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("label {label} outside class set 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape { op, msg: msg.into() }
    }

    pub(crate) fn axis(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Axis { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the error comes from bad input data (as opposed to a numerical
    /// failure inside the engine).
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite { .. } | Error::ImaginaryResidue { .. } | Error::NonScalarLoss(_)
        )
    }
}
