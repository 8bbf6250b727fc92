//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants correspond to the distinct failure categories surfaced by the
/// library operations, so callers (notably the CLI) can map them to exit
/// codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a precondition (empty waveform, non-positive
    /// value, invalid parameter set).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two waveforms that must share sample rate and length do not.
    #[error("waveform mismatch: {0}")]
    Mismatch(String),

    /// A requested frequency lies outside the representable band
    /// (above Nyquist or below zero).
    #[error("out of band: {0}")]
    OutOfBand(String),

    /// A band or lookup frequency is outside the available grid/table.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A spectrum fed to the real inverse transform is not Hermitian.
    #[error("spectrum symmetry violation: {0}")]
    SymmetryViolation(String),

    /// Sample rate too low for the requested simulation or analysis.
    #[error("aliasing risk: {0}")]
    AliasingRisk(String),

    /// Sweep planning could not satisfy the acquisition constraints.
    #[error("sweep planning failed: {0}")]
    Planning(String),

    /// The probe tone is absent (or numerically negligible) in the input
    /// record, so the response ratio is degenerate.
    #[error("degenerate division: {0}")]
    DegenerateDivision(String),

    /// A response table does not cover the frequency range required by a
    /// reconstruction.
    #[error("response coverage: {0}")]
    Coverage(String),

    /// The response magnitude vanishes inside the reconstruction passband.
    #[error("ill-conditioned response: {0}")]
    IllConditioned(String),

    /// A waveform handed to the pulse metrics does not contain a pulse.
    #[error("not pulse-like: {0}")]
    NotPulseLike(String),

    /// The response magnitude is zero at the requested frequency, so no
    /// finite input produces a detectable output.
    #[error("undetectable at frequency: {0}")]
    Undetectable(String),

    /// Too few data points for the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A configuration file or builtin model name could not be understood.
    #[error("config: {0}")]
    Config(String),

    /// A CSV file does not follow the documented schema.
    #[error("format: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
