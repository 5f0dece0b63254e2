//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by propagation, optimization, scenario execution and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// A control field tagged with one frame was used with a system set up
    /// for the other.
    #[error("frame mismatch: system expects {expected} but field is {found}")]
    FrameMismatch {
        expected: &'static str,
        found: &'static str,
    },

    /// Track lengths or grids that must agree do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// State left the representable range (NaN/Inf) during propagation.
    #[error("propagation diverged at step {step}: non-finite state")]
    Diverged { step: usize },

    /// Refusing to overwrite an existing completed output directory.
    #[error("output already exists at {0} (use --force to overwrite)")]
    OutputExists(String),

    /// A stored field file could not be interpreted.
    #[error("field file error: {0}")]
    FieldFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
