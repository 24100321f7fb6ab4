use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: shape {shape:?} implies {expected} elements, got {actual}")]
    InvalidTensor {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: kernel {kernel}x{kernel_w} does not fit padded input {height}x{width}")]
    KernelTooLarge {
        op: &'static str,
        kernel: usize,
        kernel_w: usize,
        height: usize,
        width: usize,
    },

    #[error("target is not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("invalid encoder spec at layer {layer}: {reason}")]
    InvalidSpec { layer: usize, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("wrong head: model has a {actual} head, operation requires {expected}")]
    WrongHead {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("training data contains a single class; binary loss is degenerate")]
    SingleClass,

    #[error("grade {0} outside 1..=5")]
    GradeOutOfRange(i64),

    #[error("expected {expected} grades, got {actual}")]
    GradeCount { expected: usize, actual: usize },

    #[error("ROC undefined: need at least one positive and one negative example")]
    RocUndefined,

    #[error("need at least {folds} distinct patients for {folds} folds, found {patients}")]
    TooFewPatients { folds: usize, patients: usize },

    #[error("invalid fold count {0}; need k >= 2")]
    InvalidFoldCount(usize),

    #[error("fold index {index} out of range for k = {k}")]
    FoldOutOfRange { index: usize, k: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame file {path} for embryo `{embryo_id}`: {reason}")]
    FrameFile {
        embryo_id: String,
        path: PathBuf,
        reason: String,
    },

    #[error("manifest {path} line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint header corrupt: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint truncated: expected {expected} payload bytes, found {found}")]
    CheckpointTruncated { expected: usize, found: usize },

    #[error("checkpoint tensor `{name}` has shape {found:?}, model expects {expected:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("data leakage: patient `{patient}` appears on both sides of fold {fold}")]
    Leakage { patient: String, fold: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
