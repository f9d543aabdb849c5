//! Error type shared by all encoder modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by encoder construction and forward passes.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderError {
    /// Operand shapes are inconsistent (matmul dims, gain/bias lengths, ...).
    Shape(String),
    /// Input contained NaN or infinity where finite values are required.
    NonFinite(String),
    /// A query row has no unmasked key to attend to.
    FullyMaskedQuery { row: usize },
    /// A named tensor required by the configuration is absent.
    MissingTensor(String),
    /// Configuration is internally inconsistent or incompatible with weights.
    Config(String),
    /// No preset registered under this name.
    UnknownPreset(String),
    /// A block-processing step received an empty center segment.
    EmptyCenter,
    /// Frames were pushed into a session that has already been flushed.
    StreamClosed,
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::Shape(msg) => write!(f, "shape error: {msg}"),
            EncoderError::NonFinite(msg) => write!(f, "non-finite input: {msg}"),
            EncoderError::FullyMaskedQuery { row } => {
                write!(f, "attention query row {row} has no unmasked key")
            }
            EncoderError::MissingTensor(name) => write!(f, "missing tensor: {name}"),
            EncoderError::Config(msg) => write!(f, "config error: {msg}"),
            EncoderError::UnknownPreset(name) => write!(f, "unknown preset: {name}"),
            EncoderError::EmptyCenter => write!(f, "empty center segment"),
            EncoderError::StreamClosed => write!(f, "stream already flushed"),
        }
    }
}

impl core::error::Error for EncoderError {}

pub type Result<T> = core::result::Result<T, EncoderError>;
