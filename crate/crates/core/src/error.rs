use thiserror::Error;

/// Errors surfaced by embedding, extraction and the supporting codecs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("payload must contain at least one byte")]
    EmptyPayload,

    #[error("payload digest mismatch (corrupted payload, wrong seed or wrong length)")]
    Integrity,

    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("insufficient capacity: host carries {capacity_bits} bits, {required_bits} required")]
    Capacity { capacity_bits: u64, required_bits: u64 },

    #[error("no embedded signal found (preamble gain {gain:.6}, sigma {sigma:.3})")]
    SignalNotFound { gain: f64, sigma: f64 },

    #[error("malformed tensor store: {0}")]
    Format(String),

    #[error("filter selected no tensors")]
    EmptySelection,

    #[error("flat view does not match the tensor store layout")]
    ShapeMismatch,

    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("LDPC construction failed: {0}")]
    Construction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
