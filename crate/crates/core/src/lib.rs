//! Simulation, characterization, and equalization toolkit for
//! intensity-modulated voltage sensors with a mechanical resonance.
//!
//! The crate models a sensor phase as a linear system (flat band,
//! high-pass corner, strong resonance) with quiescent offset, clipping,
//! and calibrated output noise, and implements the measurement pipeline
//! around it:
//!
//! * [`waveform`] — time/frequency containers and discrete transforms;
//! * [`sensor`] — the parametric sensor model and noise synthesis;
//! * [`sweep`] — swept-sine frequency-response estimation (Bode tables);
//! * [`noise`] — averaged-periodogram PSD estimation, band rms,
//!   minimum detectable input, dynamic range;
//! * [`equalizer`] — apodized inverse filtering that reconstructs the
//!   input waveform from a resonance-distorted output;
//! * [`transducer`] — displacement-curve operating point and log-log
//!   linearity analysis.

// `!(x > 0.0)` is used throughout validation on purpose: it rejects NaN
// along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equalizer;
pub mod error;
pub mod noise;
pub mod sensor;
pub mod sweep;
pub mod transducer;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::{
    forward_transform, inverse_transform, inverse_transform_with_residue, value_at_frequency,
    BinValue, FrequencyGrid, Spectrum, Waveform,
};
