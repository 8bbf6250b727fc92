//! Time- and frequency-domain containers plus the discrete transforms that
//! every other module is built on.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * analysis (forward) kernel `e^{-j 2π k n / N}`, unnormalized sum;
//! * synthesis (inverse) carries the `1/N` factor;
//! * `Spectrum` bin `k` sits at frequency `k · sample_rate / N`, with bins
//!   above `N/2` holding the negative frequencies.
//!
//! Response ratios such as `V_out/V_in` are independent of the
//! normalization, but transforms and periodograms depend on it, so it is
//! stated here and tested in `tests/acceptance.rs` against a brute-force
//! DFT.
//!
//! Transforms accept any length (not just powers of two). All types are
//! immutable after construction; operations are pure functions and safe to
//! call concurrently.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Relative rms of the imaginary residue above which the real inverse
/// transform refuses the spectrum as non-Hermitian.
pub const HERMITIAN_RESIDUE_LIMIT: f64 = 1e-9;

/// Uniformly sampled real-valued record in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
    t0: f64,
}

impl Waveform {
    /// Build a waveform from raw samples at `sample_rate` Hz starting at t = 0.
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        Self::with_t0(samples, sample_rate, 0.0)
    }

    /// Build a waveform with an explicit start time in seconds.
    pub fn with_t0(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidInput(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            t0,
        })
    }

    /// Sampled sine `amplitude · sin(2π f t + phase)` over `n` samples.
    pub fn sine(frequency: f64, amplitude: f64, phase: f64, sample_rate: f64, n: usize) -> Result<Self> {
        if !(frequency > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sine frequency must be positive, got {frequency}"
            )));
        }
        let w = 2.0 * std::f64::consts::PI * frequency;
        let samples = (0..n)
            .map(|i| amplitude * (w * i as f64 / sample_rate + phase).sin())
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Record duration `len / sample_rate` in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time of sample `i` in seconds.
    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Copy with the mean removed.
    pub fn zero_mean(&self) -> Self {
        let m = self.mean();
        Self {
            samples: self.samples.iter().map(|s| s - m).collect(),
            sample_rate: self.sample_rate,
            t0: self.t0,
        }
    }

    /// Error unless `other` has the same length and sample rate.
    pub fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.samples.len() != other.samples.len() {
            return Err(Error::Mismatch(format!(
                "lengths differ: {} vs {}",
                self.samples.len(),
                other.samples.len()
            )));
        }
        if (self.sample_rate - other.sample_rate).abs()
            > 1e-9 * self.sample_rate.max(other.sample_rate)
        {
            return Err(Error::Mismatch(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        Ok(())
    }

    /// Write the waveform as CSV: a `# sample_rate_hz=.. t0_s=..` header
    /// line followed by one sample per line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sample_rate_hz={} t0_s={}", self.sample_rate, self.t0);
        for s in &self.samples {
            let _ = writeln!(out, "{s}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parse the CSV schema written by [`Waveform::to_csv_string`].
    ///
    /// Accepts both `\n` and `\r\n` line endings. Unknown `key=value`
    /// tokens on the header line are ignored so the schema can grow.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty waveform file".into()))?;
        let header = header.trim_end_matches('\r');
        if !header.starts_with('#') {
            return Err(Error::Format(
                "waveform file must start with a '# sample_rate_hz=.. t0_s=..' header".into(),
            ));
        }
        let mut sample_rate = None;
        let mut t0 = 0.0;
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some((key, value)) = token.split_once('=') {
                let value: f64 = value.parse().map_err(|_| {
                    Error::Format(format!("header value for '{key}' is not a number: {value}"))
                })?;
                match key {
                    "sample_rate_hz" => sample_rate = Some(value),
                    "t0_s" => t0 = value,
                    _ => {}
                }
            }
        }
        let sample_rate = sample_rate
            .ok_or_else(|| Error::Format("header is missing sample_rate_hz".into()))?;
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r').trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Format(format!("line {}: not a number: {line}", i + 2))
            })?;
            samples.push(v);
        }
        Self::with_t0(samples, sample_rate, t0)
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

/// Complex discrete spectrum of a real record.
///
/// Produced by [`forward_transform`]; `bins[k]` is the unnormalized
/// analysis sum at frequency `k · bin_spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    bin_spacing: f64,
}

impl Spectrum {
    /// Assemble a spectrum from raw bins; `bin_spacing` is in Hz.
    pub fn new(bins: Vec<Complex64>, bin_spacing: f64) -> Result<Self> {
        if !(bin_spacing > 0.0) || !bin_spacing.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bin spacing must be positive, got {bin_spacing}"
            )));
        }
        if bins.is_empty() {
            return Err(Error::InvalidInput("spectrum must have at least one bin".into()));
        }
        Ok(Self { bins, bin_spacing })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    /// Frequency of bin `k` on the unaliased positive axis.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_spacing
    }

    /// Sample rate of the originating record.
    pub fn sample_rate(&self) -> f64 {
        self.bin_spacing * self.bins.len() as f64
    }

    /// Highest representable frequency, `sample_rate / 2`.
    pub fn nyquist(&self) -> f64 {
        self.sample_rate() / 2.0
    }

    /// Index of the highest non-negative-frequency bin (`N/2` rounded down).
    pub fn max_positive_bin(&self) -> usize {
        self.bins.len() / 2
    }
}

/// Complex bin value returned by [`value_at_frequency`], reporting the
/// exact bin that was read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinValue {
    pub value: Complex64,
    pub bin_index: usize,
    pub bin_frequency: f64,
}

/// Strictly increasing list of non-negative frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    frequencies: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidInput("frequency grid is empty".into()));
        }
        if frequencies[0] < 0.0 {
            return Err(Error::InvalidInput(format!(
                "frequencies must be non-negative, got {}",
                frequencies[0]
            )));
        }
        for pair in frequencies.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidInput(format!(
                    "frequencies must be strictly increasing, got {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        Ok(Self { frequencies })
    }

    /// Logarithmically spaced grid with `points_per_decade` points,
    /// inclusive of `lo`, not exceeding `hi`.
    pub fn log_spaced(lo: f64, hi: f64, points_per_decade: usize) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) || points_per_decade == 0 {
            return Err(Error::InvalidInput(format!(
                "log grid needs 0 < lo < hi and points_per_decade > 0, got {lo}..{hi} @ {points_per_decade}"
            )));
        }
        let decades = (hi / lo).log10();
        let n = (decades * points_per_decade as f64).floor() as usize + 1;
        let step = 1.0 / points_per_decade as f64;
        let freqs: Vec<f64> = (0..n).map(|i| lo * 10f64.powf(i as f64 * step)).collect();
        Self::new(freqs)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Unnormalized forward DFT of a real record.
pub fn forward_transform(w: &Waveform) -> Result<Spectrum> {
    if w.is_empty() {
        return Err(Error::InvalidInput("cannot transform an empty waveform".into()));
    }
    let n = w.len();
    let mut buf: Vec<Complex64> = w.samples().iter().map(|&s| Complex64::new(s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Spectrum::new(buf, w.sample_rate() / n as f64)
}

/// Inverse DFT (`1/N` normalization) producing a real waveform.
///
/// Errors if the spectrum is not Hermitian to within
/// [`HERMITIAN_RESIDUE_LIMIT`] relative rms; the discarded imaginary
/// residue is available from [`inverse_transform_with_residue`].
pub fn inverse_transform(s: &Spectrum) -> Result<Waveform> {
    inverse_transform_with_residue(s).map(|(w, _)| w)
}

/// As [`inverse_transform`], also reporting the relative rms of the
/// imaginary part that was discarded.
pub fn inverse_transform_with_residue(s: &Spectrum) -> Result<(Waveform, f64)> {
    if s.is_empty() {
        return Err(Error::InvalidInput("cannot invert an empty spectrum".into()));
    }
    let n = s.len();
    let mut buf = s.bins().to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut real_sq = 0.0;
    let mut imag_sq = 0.0;
    let samples: Vec<f64> = buf
        .iter()
        .map(|c| {
            let re = c.re * scale;
            let im = c.im * scale;
            real_sq += re * re;
            imag_sq += im * im;
            re
        })
        .collect();
    let residue = if real_sq > 0.0 {
        (imag_sq / real_sq).sqrt()
    } else if imag_sq > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if residue > HERMITIAN_RESIDUE_LIMIT {
        return Err(Error::SymmetryViolation(format!(
            "imaginary residue {residue:.3e} exceeds {HERMITIAN_RESIDUE_LIMIT:.0e}; \
             spectrum is not Hermitian"
        )));
    }
    let w = Waveform::new(samples, s.sample_rate())?;
    Ok((w, residue))
}

/// Complex value at the bin nearest `f`, reporting the exact bin used.
///
/// Nearest-bin (not interpolated) lookup: the sweep planner guarantees
/// probe tones land within a small fraction of a bin of an exact bin.
pub fn value_at_frequency(s: &Spectrum, f: f64) -> Result<BinValue> {
    if !f.is_finite() || f < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lookup frequency must be non-negative, got {f}"
        )));
    }
    let nyquist = s.nyquist();
    if f > nyquist * (1.0 + 1e-12) {
        return Err(Error::OutOfBand(format!(
            "frequency {f} Hz exceeds Nyquist {nyquist} Hz"
        )));
    }
    let k = ((f / s.bin_spacing()).round() as usize).min(s.max_positive_bin());
    Ok(BinValue {
        value: s.bins()[k],
        bin_index: k,
        bin_frequency: s.bin_frequency(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force O(N^2) DFT, the independent oracle for the FFT path.
    fn dft_oracle(samples: &[f64]) -> Vec<Complex64> {
        let n = samples.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &x) in samples.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    acc += Complex64::new(x * phase.cos(), x * phase.sin());
                }
                acc
            })
            .collect()
    }

    /// Brute-force inverse DFT with 1/N normalization.
    fn idft_oracle(bins: &[Complex64]) -> Vec<f64> {
        let n = bins.len();
        (0..n)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &b) in bins.iter().enumerate() {
                    let phase = 2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    acc += b * Complex64::new(phase.cos(), phase.sin());
                }
                acc.re / n as f64
            })
            .collect()
    }

    fn random_waveform(rng: &mut impl Rng, n: usize, rate: f64) -> Waveform {
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn constant_waveform_concentrates_at_dc() {
        let c = 0.75;
        let n = 128;
        let w = Waveform::new(vec![c; n], 1000.0).unwrap();
        let s = forward_transform(&w).unwrap();
        assert_relative_eq!(s.bins()[0].re, c * n as f64, max_relative = 1e-12);
        assert!(s.bins()[0].im.abs() < 1e-12 * c * n as f64);
        for k in 1..n {
            assert!(
                s.bins()[k].norm() < 1e-12 * c * n as f64,
                "bin {k} = {:?}",
                s.bins()[k]
            );
        }
    }

    #[test]
    fn unit_sine_at_exact_bin_splits_half_n() {
        let n = 256;
        let rate = 1024.0;
        let k = 13;
        let f = k as f64 * rate / n as f64;
        let w = Waveform::sine(f, 1.0, 0.0, rate, n).unwrap();
        let s = forward_transform(&w).unwrap();
        assert_relative_eq!(s.bins()[k].norm(), n as f64 / 2.0, max_relative = 1e-10);
        assert_relative_eq!(s.bins()[n - k].norm(), n as f64 / 2.0, max_relative = 1e-10);
        for (i, b) in s.bins().iter().enumerate() {
            if i != k && i != n - k {
                assert!(b.norm() < 1e-9 * n as f64, "bin {i} = {b:?}");
            }
        }
    }

    #[test]
    fn forward_matches_brute_force_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_waveform(&mut rng, 64, 64.0);
        let s = forward_transform(&w).unwrap();
        let oracle = dft_oracle(w.samples());
        let scale: f64 = oracle.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (got, want) in s.bins().iter().zip(&oracle) {
            assert!(
                (got - want).norm() <= 1e-10 * scale,
                "fft {got:?} vs dft {want:?}"
            );
        }
    }

    #[test]
    fn square_pulse_inverse_matches_brute_force() {
        // 2.5 ms pulse in a 20 ms record at 25.6 kS/s (512 samples).
        let rate = 25600.0;
        let n = 512;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                if (0.008..0.0105).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let w = Waveform::new(samples, rate).unwrap();
        let s = forward_transform(&w).unwrap();
        let inv = inverse_transform(&s).unwrap();
        let oracle = idft_oracle(s.bins());
        let scale: f64 = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (got, want) in inv.samples().iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-10 * scale, "{got} vs {want}");
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &n in &[16usize, 100, 243, 1024] {
            let w = random_waveform(&mut rng, n, 5000.0);
            let (back, residue) =
                inverse_transform_with_residue(&forward_transform(&w).unwrap()).unwrap();
            assert!(residue < 1e-12, "residue {residue}");
            let err: f64 = w
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm = (w.samples().iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(err <= 1e-9 * norm, "round trip error {err} (norm {norm})");
            assert_relative_eq!(back.sample_rate(), w.sample_rate(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = Spectrum::new(vec![Complex64::new(0.0, 0.0); 64], 1.0).unwrap();
        let w = inverse_transform(&s).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let mut bins = vec![Complex64::new(0.0, 0.0); 64];
        bins[3] = Complex64::new(1.0, 0.5); // no conjugate partner at bin 61
        let s = Spectrum::new(bins, 1.0).unwrap();
        match inverse_transform(&s) {
            Err(Error::SymmetryViolation(_)) => {}
            other => panic!("expected symmetry violation, got {other:?}"),
        }
    }

    #[test]
    fn empty_waveform_is_rejected() {
        let w = Waveform::new(Vec::new(), 100.0).unwrap();
        assert!(matches!(forward_transform(&w), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn value_at_exact_bin_reports_amplitude_and_phase() {
        let n = 1000;
        let rate = 10_000.0;
        let k = 70;
        let f = k as f64 * rate / n as f64;
        let phase = 0.3;
        let w = Waveform::sine(f, 2.0, phase, rate, n).unwrap();
        let s = forward_transform(&w).unwrap();
        let bv = value_at_frequency(&s, f).unwrap();
        assert_eq!(bv.bin_index, k);
        assert_relative_eq!(bv.bin_frequency, f, max_relative = 1e-12);
        assert_relative_eq!(bv.value.norm(), 2.0 * n as f64 / 2.0, max_relative = 1e-9);
        // a * sin(wt + p) has bin value (a*N/2) * e^{j(p - pi/2)}
        let expected_arg = phase - std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(bv.value.arg(), expected_arg, epsilon = 1e-9);
    }

    #[test]
    fn dc_query_on_zero_mean_waveform_is_negligible() {
        let n = 4096;
        let w = Waveform::sine(100.0, 1.0, 0.0, 40960.0, n).unwrap();
        let s = forward_transform(&w).unwrap();
        let bv = value_at_frequency(&s, 0.0).unwrap();
        let max_abs = w.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(bv.value.norm() < 1e-9 * n as f64 * max_abs);
    }

    #[test]
    fn query_between_bins_snaps_to_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = random_waveform(&mut rng, 200, 2000.0);
        let s = forward_transform(&w).unwrap();
        let spacing = s.bin_spacing();
        // 0.3 bins above bin 41 must snap down to bin 41
        let bv = value_at_frequency(&s, 41.3 * spacing).unwrap();
        assert_eq!(bv.bin_index, 41);
        assert_eq!(bv.value, s.bins()[41]);
        // 0.7 bins above bin 41 must snap up to 42
        let bv = value_at_frequency(&s, 41.7 * spacing).unwrap();
        assert_eq!(bv.bin_index, 42);
        assert_eq!(bv.value, s.bins()[42]);
    }

    #[test]
    fn query_above_nyquist_is_out_of_band() {
        let w = Waveform::sine(10.0, 1.0, 0.0, 1000.0, 100).unwrap();
        let s = forward_transform(&w).unwrap();
        assert!(matches!(
            value_at_frequency(&s, 501.0),
            Err(Error::OutOfBand(_))
        ));
    }

    #[test]
    fn parseval_holds_for_assorted_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &n in &[16usize, 45, 128, 999, 2048, 4096] {
            let w = random_waveform(&mut rng, n, 1000.0);
            let s = forward_transform(&w).unwrap();
            let time_energy: f64 = w.samples().iter().map(|v| v * v).sum();
            let freq_energy: f64 =
                s.bins().iter().map(|b| b.norm_sqr()).sum::<f64>() / n as f64;
            assert_relative_eq!(time_energy, freq_energy, max_relative = 1e-9);
        }
    }

    #[test]
    fn transform_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 300;
        let x = random_waveform(&mut rng, n, 1000.0);
        let y = random_waveform(&mut rng, n, 1000.0);
        let (a, b) = (2.5, -1.25);
        let combo: Vec<f64> = x
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(xv, yv)| a * xv + b * yv)
            .collect();
        let sc = forward_transform(&Waveform::new(combo, 1000.0).unwrap()).unwrap();
        let sx = forward_transform(&x).unwrap();
        let sy = forward_transform(&y).unwrap();
        let scale: f64 = sc.bins().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for k in 0..n {
            let want = a * sx.bins()[k] + b * sy.bins()[k];
            assert!((sc.bins()[k] - want).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn real_input_yields_hermitian_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 257;
        let w = random_waveform(&mut rng, n, 1000.0);
        let s = forward_transform(&w).unwrap();
        let scale: f64 = s.bins().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for k in 1..n {
            let diff = (s.bins()[n - k] - s.bins()[k].conj()).norm();
            assert!(diff <= 1e-12 * scale, "bin {k} asymmetry {diff}");
        }
    }

    #[test]
    fn csv_round_trip_preserves_samples_exactly() {
        let w = Waveform::with_t0(vec![0.125, -3.5e-7, 2.0, 0.000_050_51], 25000.0, 0.25).unwrap();
        let text = w.to_csv_string();
        let back = Waveform::from_csv_str(&text).unwrap();
        assert_eq!(back, w);
        // CRLF input must parse identically
        let crlf = text.replace('\n', "\r\n");
        assert_eq!(Waveform::from_csv_str(&crlf).unwrap(), w);
    }

    #[test]
    fn csv_rejects_missing_header_and_bad_samples() {
        assert!(matches!(
            Waveform::from_csv_str("1.0\n2.0\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Waveform::from_csv_str("# sample_rate_hz=100 t0_s=0\n1.0\nnope\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Waveform::from_csv_str("# t0_s=0\n1.0\n"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn frequency_grid_validates_ordering() {
        assert!(FrequencyGrid::new(vec![1.0, 2.0, 2.0]).is_err());
        assert!(FrequencyGrid::new(vec![-1.0, 2.0]).is_err());
        let g = FrequencyGrid::log_spaced(1.0, 10_000.0, 40).unwrap();
        assert_eq!(g.len(), 161);
        assert_relative_eq!(g.frequencies()[0], 1.0);
        assert_relative_eq!(g.frequencies()[160], 10_000.0, max_relative = 1e-9);
    }
}
