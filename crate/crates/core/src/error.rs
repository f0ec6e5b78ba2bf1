use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate polygon (area {area:.3} px^2)")]
    DegeneratePolygon { area: f64 },
    #[error("grid warp still folds after {attempts} resampling attempts")]
    FoldUnrecoverable { attempts: usize },
    #[error("appearance pool is empty")]
    EmptyPool,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("augmentation requested but every operation kind is disabled")]
    NoOpsEnabled,
    #[error("singular transform (|det| = {det:e})")]
    SingularTransform { det: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("every candidate of generation {generation} failed to evaluate")]
    AllCandidatesFailed { generation: u64 },
    #[error("evaluator unavailable: {0}")]
    EvaluatorUnavailable(String),
    #[error("bad .flo magic {0}")]
    BadMagic(f32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("hyperparameter hash mismatch: dataset {dataset}, config {config}")]
    HashMismatch { dataset: String, config: String },
    #[error("validation failed: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<crate::hyper::FieldError>),
    #[error("malformed record: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}
