//! Crate-wide error type.
//!
//! Every failure carries a distinct prefix so callers (and the command-line
//! frontend) can report what went wrong without pattern-matching on payloads.

use thiserror::Error;

/// Errors produced by chain construction, analysis, and file parsing.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had the wrong dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An entry or parameter was outside its admissible range.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A time index fell outside the window a chain can resolve.
    #[error("time index out of range: {0}")]
    TimeRange(String),

    /// A subset cut was empty, full, or referenced indices beyond n.
    #[error("invalid cut: {0}")]
    InvalidCut(String),

    /// Jet sets violated containment or disjointness requirements.
    #[error("invalid jet: {0}")]
    InvalidJet(String),

    /// A continuous-time request referenced times outside segment coverage.
    #[error("uncovered interval: {0}")]
    Uncovered(String),

    /// A generator family rejected its parameters.
    #[error("invalid family parameters: {0}")]
    FamilyParams(String),

    /// Text input could not be parsed as a chain or generator description.
    #[error("parse error: {0}")]
    Parse(String),

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// Underlying I/O failure while reading or writing chain files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
