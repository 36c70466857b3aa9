use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite box coordinates {0:?}")]
    NonFinite([f64; 4]),
    #[error("box {0:?} has no positive area")]
    EmptyBox([f64; 4]),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: class index {index} out of range (have {len} classes)")]
    ClassIndex { line: usize, index: usize, len: usize },
    #[error("unknown object class '{0}'")]
    UnknownClass(String),
    #[error("detection '{id}' has zero area after clamping to the image")]
    ZeroArea { id: String },
    #[error("detection '{id}': {message}")]
    InvalidDetection { id: String, message: String },
    #[error("duplicate detection id '{0}'")]
    DuplicateId(String),
    #[error("invalid image dimensions {width}x{height}")]
    Dimensions { width: u32, height: u32 },
    #[error("scene pair dimensions differ: {initial:?} vs {final_:?}")]
    PairDimensions {
        initial: (u32, u32),
        final_: (u32, u32),
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures while obtaining a relation label.
#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("failed to start plugin '{command}': {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plugin exited: {0}")]
    Exited(String),
    #[error("plugin timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("plugin I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("plugin protocol error: {message} (line: {line})")]
    Protocol { line: String, message: String },
    #[error("plugin reported error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("classifier needs the scene image but none was supplied")]
    MissingImage,
    #[error("detection '{0}' is not known to the classifier")]
    UnknownDetection(String),
    #[error("invalid classifier input: {0}")]
    Input(String),
}

impl ClassifyError {
    /// Transport and protocol failures, as opposed to bad caller input.
    pub fn is_transport(&self) -> bool {
        !matches!(
            self,
            ClassifyError::MissingImage | ClassifyError::UnknownDetection(_) | ClassifyError::Input(_)
        )
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error(
        "sample {index}: could not place objects after {attempts} attempts; try fewer objects or tasks"
    )]
    Placement { index: u64, attempts: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no outcomes to evaluate")]
    Empty,
    #[error("task ({picked}, {target}) refers to a pair outside the evaluation universe")]
    OutsideUniverse { picked: String, target: String },
    #[error("conflicting tasks for pair ({0}, {1})")]
    Conflict(String, String),
}
