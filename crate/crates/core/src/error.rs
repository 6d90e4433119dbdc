//! Error types shared across the workbench.

use thiserror::Error;

/// Unified error type for all workbench operations.
#[derive(Debug, Error)]
pub enum DncError {
    /// A tensor or sequence arrived with the wrong dimensions.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// An input value is outside its documented domain (non-finite, out of range).
    #[error("rejected input in {context}: {reason}")]
    RejectedInput {
        context: &'static str,
        reason: String,
    },

    /// Configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// Instance generation could not satisfy the lesson constraints.
    #[error("generation failed after {retries} retries: {reason}")]
    Generation { retries: usize, reason: String },

    /// A dataset, checkpoint, or curve file is malformed.
    #[error("data error: {0}")]
    Data(String),

    /// Memory capacity exhausted (fixed memory overflow or extension limit hit).
    #[error("memory capacity exhausted: {0}")]
    Capacity(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    /// Checkpoint format version is not supported.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl DncError {
    pub fn shape(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        DncError::Shape {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn rejected(context: &'static str, reason: impl Into<String>) -> Self {
        DncError::RejectedInput {
            context,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: config 2, data 3, capacity 4, divergence 5.
    pub fn exit_code(&self) -> i32 {
        match self {
            DncError::Config(_) | DncError::Shape { .. } => 2,
            DncError::RejectedInput { .. }
            | DncError::Generation { .. }
            | DncError::Data(_)
            | DncError::Version { .. }
            | DncError::Io(_)
            | DncError::Serde(_) => 3,
            DncError::Capacity(_) => 4,
            DncError::Divergence { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, DncError>;
