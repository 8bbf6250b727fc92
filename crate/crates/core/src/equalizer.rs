//! Apodized inverse filtering: reconstruct the input waveform from a
//! resonance-distorted sensor output.
//!
//! The estimated input spectrum is
//!
//! ```text
//! V̂_in(f) = W_L(f) · W_H(f) / H(f) · V_out(f)
//! ```
//!
//! where `W_L` tapers out the low frequencies the sensor cannot see
//! (capacitive coupling kills dc) and `W_H` rolls off above the usable
//! band so that dividing by a tiny |H| never amplifies content the sensor
//! did not actually respond to. Bins at or above `f_high` are set to zero
//! outright — they are never divided. Optional notches remove known spur
//! lines. The estimate is zero-mean by construction (`W_L(0) = 0`), so
//! results are on a relative voltage scale.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sweep::BodeTable;
use crate::waveform::{forward_transform, inverse_transform, Spectrum, Waveform};

/// Low-frequency window: `sin(π f / 2 f_low)` below `f_low`, 1 above,
/// exactly 0 at dc.
pub fn window_low(f: f64, f_low: f64) -> f64 {
    if f <= 0.0 {
        0.0
    } else if f >= f_low {
        1.0
    } else {
        (std::f64::consts::FRAC_PI_2 * f / f_low).sin()
    }
}

/// High-frequency window: `cos(π f / 2 f_high)` below `f_high`, exactly 0
/// at and above it.
pub fn window_high(f: f64, f_high: f64) -> f64 {
    if f < 0.0 {
        return 0.0;
    }
    if f >= f_high {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * f / f_high).cos()
    }
}

/// Zero notch with a cosine taper: `sin²(π(f−c)/w)` inside the notch
/// width, 1 outside. Zero at the center, smooth at the edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Notch {
    pub center_hz: f64,
    pub width_hz: f64,
}

impl Notch {
    pub fn factor(&self, f: f64) -> f64 {
        let d = f - self.center_hz;
        if d.abs() >= self.width_hz / 2.0 {
            1.0
        } else {
            let s = (std::f64::consts::PI * d / self.width_hz).sin();
            s * s
        }
    }
}

/// Window configuration for a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ApodizationSpec {
    pub f_low: f64,
    pub f_high: f64,
    pub notches: Vec<Notch>,
}

impl ApodizationSpec {
    pub fn new(f_low: f64, f_high: f64) -> Result<Self> {
        Self::with_notches(f_low, f_high, Vec::new())
    }

    pub fn with_notches(f_low: f64, f_high: f64, notches: Vec<Notch>) -> Result<Self> {
        if !(f_low > 0.0) || !(f_high > f_low) {
            return Err(Error::InvalidInput(format!(
                "need 0 < f_low < f_high, got {f_low} and {f_high}"
            )));
        }
        for n in &notches {
            if !(n.width_hz > 0.0) || !(n.center_hz > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "notch must have positive center and width, got {n:?}"
                )));
            }
        }
        Ok(Self {
            f_low,
            f_high,
            notches,
        })
    }

    /// Combined window `W_L · W_H · notches` at `f`.
    pub fn window_product(&self, f: f64) -> f64 {
        let mut w = window_low(f, self.f_low) * window_high(f, self.f_high);
        for n in &self.notches {
            w *= n.factor(f);
        }
        w
    }
}

/// Pulse-shape summary used to score reconstructions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseMetrics {
    /// |value| at the dominant extremum, volts.
    pub peak_amplitude: f64,
    /// Width between the first and last half-maximum crossings, seconds.
    pub fwhm: f64,
    /// `100·(peak_est − peak_ref)/peak_ref`; present only when a
    /// reference was supplied.
    pub amplitude_error_pct: Option<f64>,
    /// Rms over the window from `t_peak + 3·fwhm` to the record end
    /// (0 when that window is empty).
    pub residual_ringing_rms: f64,
}

/// Result of [`reconstruct`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Zero-mean estimate of the input on a relative voltage scale.
    pub estimate: Waveform,
    /// The estimated input spectrum (exactly zero at and above `f_high`).
    pub spectrum: Spectrum,
    /// Pulse metrics, when the estimate is pulse-like.
    pub metrics: Option<PulseMetrics>,
}

/// Fraction of the window weight below which missing response coverage is
/// tolerated (those bins are zeroed instead of divided).
const COVERAGE_WEIGHT_FLOOR: f64 = 0.01;

/// Ratio to the table's largest |H| below which the response is treated
/// as ill-conditioned inside the passband.
const ILL_CONDITIONED_RATIO: f64 = 1e-6;

/// Reconstruct the input waveform from a sensor output record.
///
/// The record's mean (the quiescent level) is subtracted, each
/// positive-frequency bin is scaled by `W_L·W_H/H` with `H` interpolated
/// from the Bode table (log-log, extrapolated along the high-pass slope
/// below the first row), negative-frequency bins mirror their conjugates,
/// and bins at or above `f_high` are zeroed without ever dividing.
pub fn reconstruct(
    v_out: &Waveform,
    response: &BodeTable,
    spec: &ApodizationSpec,
) -> Result<ReconstructionResult> {
    if v_out.is_empty() {
        return Err(Error::InvalidInput("cannot reconstruct from an empty record".into()));
    }
    if v_out.sample_rate() <= 2.0 * spec.f_high {
        return Err(Error::AliasingRisk(format!(
            "sample rate {} S/s must exceed 2·f_high = {} S/s",
            v_out.sample_rate(),
            2.0 * spec.f_high
        )));
    }
    // Highest frequency with meaningful window weight; the table must
    // reach it. (Below its first row the table is extrapolated instead.)
    let needed_top = spec.f_high
        * (2.0 / std::f64::consts::PI)
        * COVERAGE_WEIGHT_FLOOR.acos();
    if response.max_freq() < needed_top {
        return Err(Error::Coverage(format!(
            "response table ends at {} Hz but the window carries weight up to {needed_top:.1} Hz",
            response.max_freq()
        )));
    }

    let mut spectrum = forward_transform(&v_out.zero_mean())?;
    let n = spectrum.len();
    let spacing = spectrum.bin_spacing();
    let half = n / 2;
    let max_mag = response.max_magnitude();
    let bins = spectrum.bins_mut();
    bins[0] = Complex64::new(0.0, 0.0);
    for k in 1..=half {
        let f = k as f64 * spacing;
        let w = spec.window_product(f);
        let value = if f >= spec.f_high || w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else if f > response.max_freq() {
            // coverage pre-check guarantees w <= the weight floor here
            Complex64::new(0.0, 0.0)
        } else {
            let h = response.response_at_extrapolated(f)?;
            if w > COVERAGE_WEIGHT_FLOOR && h.norm() < ILL_CONDITIONED_RATIO * max_mag {
                return Err(Error::IllConditioned(format!(
                    "|H({f:.3} Hz)| = {:.3e} is below {ILL_CONDITIONED_RATIO:.0e} of the \
                     table maximum inside the passband",
                    h.norm()
                )));
            }
            bins[k] * w / h
        };
        bins[k] = value;
        let mirror = (n - k) % n;
        if mirror > half {
            bins[mirror] = value.conj();
        }
    }
    let estimate = inverse_transform(&spectrum)?;
    let metrics = pulse_metrics(&estimate, None).ok();
    Ok(ReconstructionResult {
        estimate,
        spectrum,
        metrics,
    })
}

/// Measure a pulse-like waveform: peak, FWHM from the first and last
/// half-maximum crossings (linearly interpolated), optional amplitude
/// error against a reference, and residual rms after the pulse.
pub fn pulse_metrics(estimate: &Waveform, reference: Option<&Waveform>) -> Result<PulseMetrics> {
    if estimate.len() < 3 {
        return Err(Error::NotPulseLike(format!(
            "record of {} samples cannot hold a pulse",
            estimate.len()
        )));
    }
    let samples = estimate.samples();
    let (peak_idx, peak_signed) = samples
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty");
    let peak = peak_signed.abs();
    if peak == 0.0 {
        return Err(Error::NotPulseLike("record is identically zero".into()));
    }
    let sign = peak_signed.signum();
    let half = peak / 2.0;
    let oriented = |i: usize| samples[i] * sign;

    let first_above = (0..samples.len())
        .find(|&i| oriented(i) >= half)
        .expect("peak itself is above half");
    let last_above = (0..samples.len())
        .rev()
        .find(|&i| oriented(i) >= half)
        .expect("peak itself is above half");
    if first_above == 0 && last_above == samples.len() - 1 {
        return Err(Error::NotPulseLike(
            "record never crosses the half-maximum level; no pulse edges found".into(),
        ));
    }
    let rate = estimate.sample_rate();
    let t_first = if first_above == 0 {
        0.0
    } else {
        let (y0, y1) = (oriented(first_above - 1), oriented(first_above));
        (first_above as f64 - 1.0 + (half - y0) / (y1 - y0)) / rate
    };
    let t_last = if last_above == samples.len() - 1 {
        (samples.len() - 1) as f64 / rate
    } else {
        let (y0, y1) = (oriented(last_above), oriented(last_above + 1));
        (last_above as f64 + (y0 - half) / (y0 - y1)) / rate
    };
    let fwhm = t_last - t_first;
    if !(fwhm > 0.0) {
        return Err(Error::NotPulseLike(format!(
            "degenerate half-maximum span {fwhm}"
        )));
    }

    let amplitude_error_pct = match reference {
        None => None,
        Some(r) => {
            let peak_ref = r.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak_ref == 0.0 {
                return Err(Error::InvalidInput("reference waveform is identically zero".into()));
            }
            Some(100.0 * (peak - peak_ref) / peak_ref)
        }
    };

    let t_peak = peak_idx as f64 / rate;
    let window_start = ((t_peak + 3.0 * fwhm) * rate).ceil() as usize;
    let residual_ringing_rms = if window_start < samples.len() {
        let tail = &samples[window_start..];
        (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
    } else {
        0.0
    };

    Ok(PulseMetrics {
        peak_amplitude: peak,
        fwhm,
        amplitude_error_pct,
        residual_ringing_rms,
    })
}

/// Centered square pulse: `amplitude` volts for `duration` seconds in the
/// middle of a `record_duration` record (zeros elsewhere).
///
/// Each sample holds the average of the continuous pulse over its own
/// sampling cell, so edge cells carry fractional values when the edges
/// fall between samples and the sampled pulse width reads as the nominal
/// duration regardless of grid alignment.
pub fn square_pulse(
    amplitude: f64,
    duration: f64,
    sample_rate: f64,
    record_duration: f64,
) -> Result<Waveform> {
    if !(duration > 0.0) || !(record_duration >= duration) {
        return Err(Error::InvalidInput(format!(
            "need 0 < duration <= record_duration, got {duration} and {record_duration}"
        )));
    }
    let n = (record_duration * sample_rate).round() as usize;
    if n < 2 {
        return Err(Error::InvalidInput("record too short".into()));
    }
    let center = record_duration / 2.0;
    // cell arithmetic in sample units so interior cells come out exact
    let lo = (center - duration / 2.0) * sample_rate;
    let hi = (center + duration / 2.0) * sample_rate;
    let samples = (0..n)
        .map(|i| {
            let x = i as f64;
            let overlap = (hi.min(x + 0.5) - lo.max(x - 0.5)).clamp(0.0, 1.0);
            amplitude * overlap
        })
        .collect();
    Waveform::new(samples, sample_rate)
}
