use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("joint {joint} angle {value} outside limit [{lower}, {upper}]")]
    LimitViolation {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("ik did not converge after {iterations} iterations (position residual {pos_residual:.3e} m, rotation residual {rot_residual:.3e} rad)")]
    IkFailure {
        iterations: usize,
        pos_residual: f64,
        rot_residual: f64,
    },
    #[error("target at distance {distance:.4} m is outside the reachable shell [{r_min}, {r_max}]")]
    Unreachable { distance: f64, r_min: f64, r_max: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("unsupported format version {found} (expected major {expected})")]
    FormatVersion { found: String, expected: u32 },
    #[error("command error: {0}")]
    Command(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("training failure: {0}")]
    TrainingFailure(String),
    #[error("distillation failure: {0}")]
    DistillationFailure(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("calibration required: send a reset before inputs")]
    CalibrationRequired,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("output directory {0} exists and is not empty (use --force)")]
    OutputNotEmpty(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::LimitViolation { .. } => "limit_violation",
            Self::IkFailure { .. } => "ik_failure",
            Self::Unreachable { .. } => "unreachable",
            Self::Config(_) => "config",
            Self::FormatVersion { .. } => "format_version",
            Self::Command(_) => "command",
            Self::Input(_) => "input",
            Self::Shape(_) => "shape",
            Self::ModelFile(_) => "model_file",
            Self::Diverged(_) => "diverged",
            Self::TrainingFailure(_) => "training_failure",
            Self::DistillationFailure(_) => "distillation_failure",
            Self::Protocol(_) => "protocol",
            Self::CalibrationRequired => "calibration_required",
            Self::Dataset(_) => "dataset",
            Self::OutputNotEmpty(_) => "output_not_empty",
            Self::Io { .. } => "io",
            Self::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
