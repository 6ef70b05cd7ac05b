use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("could not place non-overlapping objects for scene seed {seed} after {attempts} attempts")]
    Placement { seed: u64, attempts: usize },

    #[error("invalid scene spec: {0}")]
    SceneSpec(String),

    #[error("distortion level {value} is not in the {family} pool (valid: {valid})")]
    Level {
        family: String,
        value: String,
        valid: String,
    },

    #[error("mini-batch size must be even, got {0}")]
    BatchSize(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at iteration {iteration} (seed {seed})")]
    NonFinite { seed: u64, iteration: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest parse error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] ::image::ImageError),
}
