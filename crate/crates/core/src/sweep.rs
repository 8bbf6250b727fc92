//! Swept-sine frequency-response estimation.
//!
//! A sweep probes the system one tone at a time: record input and output,
//! transform both, and take the ratio at the probe bin. The planner
//! emulates oscilloscope acquisition constraints: sample rates come from a
//! 1-2-5 grid, every record holds at least 28 (target 50) full periods,
//! sampling runs at no less than 35 points per period, and the probe tone
//! always lands on an exact DFT bin (the requested frequency is snapped by
//! less than half a bin where needed).
//!
//! Per-trace estimates are averaged as complex numbers, which suppresses
//! uncorrelated noise; synthetic traces share the generator phase.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sensor::SensorModel;
use crate::waveform::{forward_transform, value_at_frequency, FrequencyGrid, Waveform};

/// Acquisition settings for one probe frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    /// Probe frequency after bin snapping, Hz.
    pub probe_freq: f64,
    /// Sample rate from the 1-2-5 instrument grid, S/s.
    pub sample_rate: f64,
    /// Record length in samples.
    pub n_samples: usize,
    /// Full periods in the record (`probe_freq·n_samples/sample_rate`).
    pub n_periods: usize,
}

/// Full acquisition plan for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub entries: Vec<SweepEntry>,
    pub n_averages: usize,
}

/// Minimum periods per record.
pub const MIN_PERIODS: usize = 28;
/// Target periods per record.
pub const TARGET_PERIODS: usize = 50;
/// Minimum samples per period.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 35.0;

/// Next sample rate on the 1-2-5 grid at or above `min_rate`.
fn rate_125(min_rate: f64) -> Result<f64> {
    if !min_rate.is_finite() || min_rate <= 0.0 {
        return Err(Error::Planning(format!(
            "cannot pick a sample rate at or above {min_rate}"
        )));
    }
    if min_rate > 1e15 {
        return Err(Error::Planning(format!(
            "samples-per-period >= {MIN_SAMPLES_PER_PERIOD} would need a sample rate \
             above 1e15 S/s (requested {min_rate:.3e})"
        )));
    }
    let e0 = min_rate.log10().floor() as i32;
    for e in e0..=e0 + 2 {
        for m in [1.0, 2.0, 5.0] {
            let r = m * 10f64.powi(e);
            if r >= min_rate * (1.0 - 1e-12) {
                return Ok(r);
            }
        }
    }
    Err(Error::Planning(format!("no 1-2-5 rate found above {min_rate}")))
}

fn plan_entry(freq: f64) -> Result<SweepEntry> {
    if !freq.is_finite() || freq <= 0.0 {
        return Err(Error::Planning(format!(
            "probe frequency must be positive and finite, got {freq}"
        )));
    }
    let mut rate = rate_125(MIN_SAMPLES_PER_PERIOD * freq)?;
    for _ in 0..8 {
        let n = (TARGET_PERIODS as f64 * rate / freq).round() as usize;
        let periods = (n as f64 * freq / rate).round() as usize;
        let snapped = periods as f64 * rate / n as f64;
        if periods >= MIN_PERIODS && rate / snapped >= MIN_SAMPLES_PER_PERIOD {
            return Ok(SweepEntry {
                probe_freq: snapped,
                sample_rate: rate,
                n_samples: n,
                n_periods: periods,
            });
        }
        // Bin snapping nudged the tone past an acquisition limit; move to
        // the next instrument rate and retry.
        rate = rate_125(rate * (1.0 + 1e-9))?;
    }
    Err(Error::Planning(format!(
        "could not satisfy period/rate constraints for {freq} Hz"
    )))
}

/// Build an acquisition plan for every frequency on the grid.
///
/// Deterministic; each entry satisfies the period, rate, and bin-exactness
/// constraints or the planner reports which constraint failed.
pub fn plan_sweep(freqs: &FrequencyGrid, n_averages: usize) -> Result<SweepPlan> {
    if n_averages == 0 {
        return Err(Error::Planning("n_averages must be at least 1".into()));
    }
    let entries = freqs
        .frequencies()
        .iter()
        .map(|&f| plan_entry(f))
        .collect::<Result<Vec<_>>>()?;
    for pair in entries.windows(2) {
        if !(pair[1].probe_freq > pair[0].probe_freq) {
            return Err(Error::Planning(format!(
                "snapped probe frequencies collide near {} Hz; use a coarser grid",
                pair[0].probe_freq
            )));
        }
    }
    Ok(SweepPlan { entries, n_averages })
}

/// Default sweep grid: 40 log-spaced points per decade over 1 Hz – 10 kHz.
pub fn default_grid() -> FrequencyGrid {
    FrequencyGrid::log_spaced(1.0, 10_000.0, 40).expect("default grid is valid")
}

/// Single-trace response estimate `V_out(f)/V_in(f)` at the probe bin.
///
/// Immune to dc offsets on either channel (the probe bin is unaffected).
/// Errors when the probe tone is absent from the input record.
pub fn estimate_response_point(
    v_in: &Waveform,
    v_out: &Waveform,
    probe_freq: f64,
) -> Result<Complex64> {
    v_in.check_compatible(v_out)?;
    if v_in.is_empty() {
        return Err(Error::InvalidInput("cannot estimate from empty records".into()));
    }
    let s_in = forward_transform(v_in)?;
    let s_out = forward_transform(v_out)?;
    let bin_in = value_at_frequency(&s_in, probe_freq)?;
    let max_abs = v_in.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * v_in.len() as f64 * max_abs;
    if bin_in.value.norm() <= floor {
        return Err(Error::DegenerateDivision(format!(
            "input bin at {} Hz has magnitude {:.3e}, below the floor {floor:.3e}; \
             the probe tone is absent from the input",
            bin_in.bin_frequency,
            bin_in.value.norm()
        )));
    }
    let bin_out = value_at_frequency(&s_out, probe_freq)?;
    Ok(bin_out.value / bin_in.value)
}

/// One row of a measured Bode table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodeRow {
    pub freq_hz: f64,
    pub magnitude_db: f64,
    /// Unwrapped phase, continuous across rows.
    pub phase_deg: f64,
    pub value: Complex64,
}

/// Measured frequency response on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeTable {
    rows: Vec<BodeRow>,
}

impl BodeTable {
    /// Build a table from `(frequency, complex response)` points,
    /// unwrapping the phase across rows.
    pub fn from_points(points: impl IntoIterator<Item = (f64, Complex64)>) -> Result<Self> {
        let mut rows: Vec<BodeRow> = Vec::new();
        for (f, v) in points {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "Bode frequencies must be positive, got {f}"
                )));
            }
            if let Some(prev) = rows.last() {
                if f <= prev.freq_hz {
                    return Err(Error::InvalidInput(format!(
                        "Bode frequencies must be strictly increasing, got {f} after {}",
                        prev.freq_hz
                    )));
                }
            }
            let norm = v.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "response at {f} Hz is {v}; magnitude must be positive and finite"
                )));
            }
            let mut phase = v.arg().to_degrees();
            if let Some(prev) = rows.last() {
                while phase - prev.phase_deg > 180.0 {
                    phase -= 360.0;
                }
                while phase - prev.phase_deg < -180.0 {
                    phase += 360.0;
                }
            }
            rows.push(BodeRow {
                freq_hz: f,
                magnitude_db: 20.0 * norm.log10(),
                phase_deg: phase,
                value: v,
            });
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("Bode table needs at least one row".into()));
        }
        Ok(Self { rows })
    }

    /// Sample a table directly from a model's transfer function.
    pub fn from_model(model: &SensorModel, freqs: &FrequencyGrid) -> Result<Self> {
        Self::from_points(
            freqs
                .frequencies()
                .iter()
                .map(|&f| (f, model.transfer_function(f))),
        )
    }

    pub fn rows(&self) -> &[BodeRow] {
        &self.rows
    }

    pub fn min_freq(&self) -> f64 {
        self.rows[0].freq_hz
    }

    pub fn max_freq(&self) -> f64 {
        self.rows[self.rows.len() - 1].freq_hz
    }

    /// Largest |H| across the table (linear, not dB).
    pub fn max_magnitude(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.value.norm())
            .fold(0.0, f64::max)
    }

    /// Interpolated response strictly inside the table's coverage.
    ///
    /// Magnitude is interpolated linearly in (log f, dB) and phase
    /// linearly in log f, using the unwrapped phase column.
    pub fn response_at(&self, f: f64) -> Result<Complex64> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::OutOfRange(format!(
                "response lookup needs a positive frequency, got {f}"
            )));
        }
        if f < self.min_freq() * (1.0 - 1e-12) || f > self.max_freq() * (1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!(
                "{f} Hz is outside the table coverage {}..{} Hz",
                self.min_freq(),
                self.max_freq()
            )));
        }
        Ok(self.interpolate(f.clamp(self.min_freq(), self.max_freq())))
    }

    /// As [`BodeTable::response_at`], but frequencies below the lowest row
    /// are extrapolated along the first-order high-pass asymptote:
    /// magnitude falls at 20 dB/decade below the first row and the phase
    /// holds the first row's value (already ≈ +90° in that regime).
    pub fn response_at_extrapolated(&self, f: f64) -> Result<Complex64> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::OutOfRange(format!(
                "response lookup needs a positive frequency, got {f}"
            )));
        }
        if f < self.min_freq() {
            let first = &self.rows[0];
            return Ok(first.value * (f / first.freq_hz));
        }
        self.response_at(f)
    }

    fn interpolate(&self, f: f64) -> Complex64 {
        let idx = self
            .rows
            .partition_point(|r| r.freq_hz < f)
            .clamp(1, self.rows.len() - 1);
        let (a, b) = (&self.rows[idx - 1], &self.rows[idx]);
        if f <= a.freq_hz {
            return a.value;
        }
        if f >= b.freq_hz {
            return b.value;
        }
        let t = (f.ln() - a.freq_hz.ln()) / (b.freq_hz.ln() - a.freq_hz.ln());
        let mag_db = a.magnitude_db + t * (b.magnitude_db - a.magnitude_db);
        let phase_deg = a.phase_deg + t * (b.phase_deg - a.phase_deg);
        Complex64::from_polar(10f64.powf(mag_db / 20.0), phase_deg.to_radians())
    }

    /// CSV with header `freq_hz,mag_db,phase_deg,re,im` — the interchange
    /// format consumed by the equalizer.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("freq_hz,mag_db,phase_deg,re,im\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.freq_hz, r.magnitude_db, r.phase_deg, r.value.re, r.value.im
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty Bode table".into()))?
            .trim_end_matches('\r');
        if header != "freq_hz,mag_db,phase_deg,re,im" {
            return Err(Error::Format(format!(
                "unexpected Bode header '{header}' (want freq_hz,mag_db,phase_deg,re,im)"
            )));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r').trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "row {}: expected 5 fields, got {}",
                    i + 2,
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: '{s}' is not a number", i + 2)))
            };
            let freq = num(fields[0])?;
            let mag_db = num(fields[1])?;
            let phase_deg = num(fields[2])?;
            let value = Complex64::new(num(fields[3])?, num(fields[4])?);
            let computed_db = 20.0 * value.norm().log10();
            if !(computed_db.is_finite()) || (computed_db - mag_db).abs() > 0.01 {
                return Err(Error::Format(format!(
                    "row {}: mag_db {mag_db} inconsistent with re/im ({computed_db:.4} dB)",
                    i + 2
                )));
            }
            // phase_deg is the unwrapped phase: it must agree with
            // arg(re + j·im) up to whole turns
            let phase_residue =
                (phase_deg - value.arg().to_degrees()).rem_euclid(360.0);
            if phase_residue.min(360.0 - phase_residue) > 0.01 {
                return Err(Error::Format(format!(
                    "row {}: phase_deg {phase_deg} inconsistent with re/im",
                    i + 2
                )));
            }
            if let Some(prev) = rows.last() {
                let prev: &BodeRow = prev;
                if freq <= prev.freq_hz {
                    return Err(Error::Format(format!(
                        "row {}: frequencies must be strictly increasing",
                        i + 2
                    )));
                }
            }
            rows.push(BodeRow {
                freq_hz: freq,
                magnitude_db: mag_db,
                phase_deg,
                value,
            });
        }
        if rows.is_empty() {
            return Err(Error::Format("Bode table has no rows".into()));
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_csv_str(&text)
    }
}

/// Where sweep traces come from.
pub enum SweepSource<'a> {
    /// Drive a sensor model with bin-exact tones of the given amplitude.
    /// Noise follows the model's own noise description; use a silent
    /// noise model for a noise-free sweep.
    Model {
        model: &'a SensorModel,
        amplitude: f64,
        seed: u64,
    },
    /// Read recorded waveform pairs from a directory laid out by
    /// [`recorded_trace_paths`].
    Recorded { dir: PathBuf },
}

/// File pair naming convention for recorded sweeps:
/// `point0003_trace007_in.csv` / `..._out.csv`.
pub fn recorded_trace_paths(dir: &Path, point: usize, trace: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("point{point:04}_trace{trace:03}_in.csv")),
        dir.join(format!("point{point:04}_trace{trace:03}_out.csv")),
    )
}

/// Mix a master seed with point/trace indices into one stream seed.
fn trace_seed(master: u64, point: usize, trace: usize) -> u64 {
    let mut x = master
        ^ (point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (trace as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Run a sweep: estimate the response at every planned frequency and
/// average `n_averages` traces per point (complex mean).
pub fn run_sweep(source: &SweepSource, plan: &SweepPlan) -> Result<BodeTable> {
    let mut points = Vec::with_capacity(plan.entries.len());
    for (i, entry) in plan.entries.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..plan.n_averages {
            let (v_in, v_out) = match source {
                SweepSource::Model {
                    model,
                    amplitude,
                    seed,
                } => {
                    let v_in = Waveform::sine(
                        entry.probe_freq,
                        *amplitude,
                        0.0,
                        entry.sample_rate,
                        entry.n_samples,
                    )?;
                    // The drive is periodic over the record, so circular
                    // filtering is the exact steady state and no settle
                    // padding is needed.
                    let out = model.simulate_periodic_output(&v_in, trace_seed(*seed, i, j))?;
                    if out.saturated {
                        return Err(Error::InvalidInput(format!(
                            "sweep trace saturated at {} Hz (trace {j}); reduce the drive amplitude",
                            entry.probe_freq
                        )));
                    }
                    (v_in, out.waveform)
                }
                SweepSource::Recorded { dir } => {
                    let (in_path, out_path) = recorded_trace_paths(dir, i, j);
                    let context = |path: &Path, e: Error| match e {
                        Error::Io(io) => Error::Io(std::io::Error::new(
                            io.kind(),
                            format!(
                                "sweep point {i} ({} Hz) trace {j}: {}: {io}",
                                entry.probe_freq,
                                path.display()
                            ),
                        )),
                        Error::Format(msg) => Error::Format(format!(
                            "sweep point {i} ({} Hz) trace {j}: {}: {msg}",
                            entry.probe_freq,
                            path.display()
                        )),
                        other => other,
                    };
                    let v_in = Waveform::read_csv(&in_path).map_err(|e| context(&in_path, e))?;
                    let v_out =
                        Waveform::read_csv(&out_path).map_err(|e| context(&out_path, e))?;
                    if v_in.len() != entry.n_samples
                        || (v_in.sample_rate() - entry.sample_rate).abs()
                            > 1e-9 * entry.sample_rate
                    {
                        return Err(Error::Mismatch(format!(
                            "sweep point {i} ({} Hz) trace {j}: record is {} samples at {} S/s, \
                             plan wants {} at {}",
                            entry.probe_freq,
                            v_in.len(),
                            v_in.sample_rate(),
                            entry.n_samples,
                            entry.sample_rate
                        )));
                    }
                    (v_in, v_out)
                }
            };
            acc += estimate_response_point(&v_in, &v_out, entry.probe_freq)?;
        }
        points.push((entry.probe_freq, acc / plan.n_averages as f64));
    }
    BodeTable::from_points(points)
}
