use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::RatingScale;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("rating {rating} of ({user_id}, {item_id}) outside [{}, {}]", scale.min, scale.max)]
    RatingOutOfRange {
        user_id: String,
        item_id: String,
        rating: f64,
        scale: RatingScale,
    },
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
    #[error("no rating logs")]
    Empty,
    #[error("train set is empty")]
    EmptyTrain,
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("pair ({user_id}, {item_id}) occurs more than once in one partition")]
    DuplicatePair { user_id: String, item_id: String },
    #[error("pair ({user_id}, {item_id}) occurs in both train and test")]
    Overlap { user_id: String, item_id: String },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train set is empty")]
    EmptyTrain,
    #[error("validation set is empty after carving {fraction} of {train} train logs")]
    EmptyValidation { fraction: f64, train: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("model `{model}` returned invalid prediction {value} for (user {user_id}, item {item_id})")]
    InvalidPrediction {
        model: String,
        user_id: String,
        item_id: String,
        value: f64,
    },
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
}

/// Errors raised while reading or writing serialized artifacts
/// (similarity matrices, factor models, reports).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
