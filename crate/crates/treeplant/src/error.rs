use thiserror::Error;

/// Errors produced across the pipeline, from treebank ingestion to training.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input line in a treebank file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed bracketed tree, located by byte offset within the line.
    #[error("parse error at offset {offset}: {msg}")]
    ParseOffset { offset: usize, msg: String },

    /// Input parsed but violates a structural invariant (cycles, empty
    /// constituents, disconnected trees, double augmentation).
    #[error("invalid structure: {0}")]
    Structure(String),

    /// Invalid configuration value or combination.
    #[error("invalid config: {0}")]
    Config(String),

    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Evaluation data inconsistent with what an operation expects.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },

    /// Checkpoint file rejected (bad magic, truncated payload, hash mismatch).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
