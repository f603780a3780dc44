use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every message starts with the error kind so that command-line diagnostics
/// can be grepped for it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("DuplicateId: patch id `{0}` appears more than once")]
    DuplicateId(String),

    #[error("ParseError: line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("EmptyManifest: manifest contains no records")]
    EmptyManifest,

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("FormatError: {0}")]
    Format(String),

    #[error("DegenerateLabels: {0}")]
    DegenerateLabels(String),

    #[error("InvalidData: {0}")]
    InvalidData(String),

    #[error("ShapeError: {0}")]
    Shape(String),

    #[error("MissingLabel: vector `{0}` has no class label")]
    MissingLabel(String),

    #[error("IncompletePredictions: {} test patch(es) without prediction: {}", .0.len(), .0.join(", "))]
    IncompletePredictions(Vec<String>),

    #[error("UnknownPatch: prediction for `{0}` which is not a test patch of the manifest")]
    UnknownPatch(String),

    #[error("UnknownClass: class {0} is not declared by the manifest")]
    UnknownClass(u32),

    #[error("EmptyEvaluation: no test patches to evaluate")]
    EmptyEvaluation,

    #[error("ZeroClassSize: class {0} has no test patches")]
    ZeroClassSize(u32),

    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),

    #[error("ConfigError: {0}")]
    Config(String),

    #[error("IoError: {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ImageError: {}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
