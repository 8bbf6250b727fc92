//! Averaged-periodogram noise analysis.
//!
//! The periodogram of a record of duration `T` is `(1/T)|FFT|²` with the
//! crate's transform convention, folded single-sided (`S₊ = 2S` for
//! `0 < f < Nyquist`; dc and Nyquist are not doubled). Averaging the
//! periodograms of many records estimates the power spectral density; the
//! per-bin variance shrinks as `1/n_averages`.
//!
//! Records are dc-subtracted before transforming: the sensor output sits
//! at a ~2 V quiescent level that is not noise. No taper is applied (the
//! bare periodogram definition); segment boundaries are the caller's
//! concern.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sweep::BodeTable;
use crate::waveform::{forward_transform, Waveform};

/// Single-sided power spectral density estimate in V²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    freqs: Vec<f64>,
    density: Vec<f64>,
    n_averages: usize,
    resolution_bw: f64,
    sample_rate: f64,
}

impl PsdEstimate {
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn n_averages(&self) -> usize {
        self.n_averages
    }

    /// Bin width, `1/T` of the segment length.
    pub fn resolution_bw(&self) -> f64 {
        self.resolution_bw
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate / 2.0
    }

    /// CSV with header `freq_hz,psd_v2_per_hz`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("freq_hz,psd_v2_per_hz\n");
        for (f, d) in self.freqs.iter().zip(&self.density) {
            let _ = writeln!(out, "{f},{d}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Average the periodograms of equal-shape segments.
pub fn averaged_periodogram(segments: &[Waveform]) -> Result<PsdEstimate> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InvalidInput("need at least one segment".into()))?;
    if first.is_empty() {
        return Err(Error::InvalidInput("segments must be non-empty".into()));
    }
    for (i, seg) in segments.iter().enumerate().skip(1) {
        first.check_compatible(seg).map_err(|e| {
            Error::Mismatch(format!("segment {i} differs from segment 0: {e}"))
        })?;
    }
    let n = first.len();
    let rate = first.sample_rate();
    let half = n / 2;
    let norm = 1.0 / (rate * n as f64);
    let mut acc = vec![0.0; half + 1];
    for seg in segments {
        let spectrum = forward_transform(&seg.zero_mean())?;
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = spectrum.bins()[k].norm_sqr() * norm;
            if k != 0 && !(n.is_multiple_of(2) && k == half) {
                p *= 2.0;
            }
            *a += p;
        }
    }
    let inv = 1.0 / segments.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    let spacing = rate / n as f64;
    Ok(PsdEstimate {
        freqs: (0..=half).map(|k| k as f64 * spacing).collect(),
        density: acc,
        n_averages: segments.len(),
        resolution_bw: spacing,
        sample_rate: rate,
    })
}

/// Integrate the density over `[f_lo, f_hi]` and take the root.
///
/// Each bin is treated as a cell of width `resolution_bw` centered on its
/// frequency; cells partially inside the band are weighted by their
/// overlap fraction.
pub fn band_rms(psd: &PsdEstimate, f_lo: f64, f_hi: f64) -> Result<f64> {
    let nyquist = psd.nyquist();
    if !(f_lo >= 0.0) || !(f_hi > f_lo) || f_hi > nyquist * (1.0 + 1e-12) {
        return Err(Error::OutOfRange(format!(
            "band {f_lo}..{f_hi} Hz must sit inside 0..{nyquist} Hz"
        )));
    }
    let df = psd.resolution_bw();
    let mut power = 0.0;
    for (f, d) in psd.freqs.iter().zip(&psd.density) {
        let cell_lo = (f - df / 2.0).max(0.0);
        let cell_hi = f + df / 2.0;
        let overlap = (cell_hi.min(f_hi) - cell_lo.max(f_lo)).max(0.0);
        power += d * overlap;
    }
    Ok(power.sqrt())
}

/// Input level that produces an rms output equal to the noise:
/// `noise_rms / |H(f)|` with |H| interpolated from the Bode table.
pub fn min_detectable_input(noise_rms: f64, response: &BodeTable, f: f64) -> Result<f64> {
    if !(noise_rms >= 0.0) || !noise_rms.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise rms must be non-negative, got {noise_rms}"
        )));
    }
    let mag = response.response_at(f)?.norm();
    if !(mag > 0.0) || !mag.is_finite() {
        return Err(Error::Undetectable(format!(
            "|H({f} Hz)| = {mag}; no input level is detectable there"
        )));
    }
    Ok(noise_rms / mag)
}

/// `20·log10(v_max/v_min)` in dB.
pub fn dynamic_range(v_max_in: f64, v_min_in: f64) -> Result<f64> {
    if !(v_max_in > 0.0) || !(v_min_in > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dynamic range needs positive levels, got {v_max_in} and {v_min_in}"
        )));
    }
    if v_max_in <= v_min_in {
        return Err(Error::InvalidInput(format!(
            "v_max ({v_max_in}) must exceed v_min ({v_min_in})"
        )));
    }
    Ok(20.0 * (v_max_in / v_min_in).log10())
}

/// Dynamic range stated at a reference frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRangeEntry {
    pub freq_hz: f64,
    /// Largest unsaturated input, V rms.
    pub v_max_rms: f64,
    /// Minimum detectable input, V rms.
    pub v_min_rms: f64,
    pub range_db: f64,
}

/// Band-integrated noise summary with input-referred sensitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub band: (f64, f64),
    pub band_rms: f64,
    /// Input-referred minimum detectable rms per frequency.
    pub min_detectable: Vec<(f64, f64)>,
    /// Present when a saturation reference was available.
    pub dynamic_range: Option<DynamicRangeEntry>,
}

impl SensitivityReport {
    /// Machine-readable CSV: `quantity,freq_hz,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("quantity,freq_hz,value\n");
        let _ = writeln!(out, "band_lo_hz,,{}", self.band.0);
        let _ = writeln!(out, "band_hi_hz,,{}", self.band.1);
        let _ = writeln!(out, "band_rms_v,,{}", self.band_rms);
        for (f, v) in &self.min_detectable {
            let _ = writeln!(out, "min_detectable_vrms,{f},{v}");
        }
        if let Some(dr) = &self.dynamic_range {
            let _ = writeln!(out, "v_max_rms,{},{}", dr.freq_hz, dr.v_max_rms);
            let _ = writeln!(out, "dynamic_range_db,{},{}", dr.freq_hz, dr.range_db);
        }
        out
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "band rms over {:.1}-{:.1} Hz: {:.4} mV",
            self.band.0,
            self.band.1,
            self.band_rms * 1e3
        );
        for (f, v) in &self.min_detectable {
            let _ = writeln!(out, "min detectable at {f:.4} Hz: {:.4} mV rms", v * 1e3);
        }
        if let Some(dr) = &self.dynamic_range {
            let _ = writeln!(
                out,
                "dynamic range at {:.1} Hz: {:.1} dB ({:.3} V rms max / {:.4} V rms min)",
                dr.freq_hz, dr.range_db, dr.v_max_rms, dr.v_min_rms
            );
        }
        out
    }
}

/// Anti-alias metadata attached to a recorded segment: the cutoff of the
/// low-pass filter that preceded the digitizer, if any.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentMetadata {
    pub lowpass_hz: Option<f64>,
}

/// Refuse segments that would fold out-of-band content into the analysis.
///
/// When the caller declares that content above the segments' Nyquist may
/// exist (`declared_content_max_hz > nyquist`), every segment must have
/// been low-pass filtered at or below Nyquist before sampling; unfiltered
/// segments (or filters above Nyquist) are rejected.
pub fn check_antialiasing(
    segments: &[SegmentMetadata],
    nyquist: f64,
    declared_content_max_hz: Option<f64>,
) -> Result<()> {
    let declared = match declared_content_max_hz {
        Some(d) if d > nyquist => d,
        _ => return Ok(()),
    };
    for (i, meta) in segments.iter().enumerate() {
        match meta.lowpass_hz {
            None => {
                return Err(Error::AliasingRisk(format!(
                    "segment {i} is unfiltered but content up to {declared} Hz is declared \
                     (Nyquist {nyquist} Hz); apply a low-pass filter before sampling"
                )))
            }
            Some(lp) if lp > nyquist => {
                return Err(Error::AliasingRisk(format!(
                    "segment {i} was filtered at {lp} Hz, above Nyquist {nyquist} Hz"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Acquisition preset for one measurement range: the anti-alias filter
/// and sample rate pairing used for that band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangePreset {
    pub name: &'static str,
    pub sample_rate: f64,
    pub lowpass_hz: f64,
    /// Band this range is meant to resolve.
    pub band: (f64, f64),
}

/// `lowband`: 1 kHz low-pass at 5 kS/s, resolving 10–1000 Hz with fine
/// spectral resolution.
pub const LOW_BAND: RangePreset = RangePreset {
    name: "lowband",
    sample_rate: 5_000.0,
    lowpass_hz: 1_000.0,
    band: (10.0, 1_000.0),
};

/// `highband`: 10 kHz low-pass at 50 kS/s, resolving 1–10 kHz.
pub const HIGH_BAND: RangePreset = RangePreset {
    name: "highband",
    sample_rate: 50_000.0,
    lowpass_hz: 10_000.0,
    band: (1_000.0, 10_000.0),
};

pub fn range_preset(name: &str) -> Option<RangePreset> {
    match name {
        "lowband" => Some(LOW_BAND),
        "highband" => Some(HIGH_BAND),
        _ => None,
    }
}

/// Write a noise segment, recording its anti-alias filter in the header.
pub fn write_segment_csv(path: &Path, w: &Waveform, meta: &SegmentMetadata) -> Result<()> {
    let mut text = w.to_csv_string();
    if let Some(lp) = meta.lowpass_hz {
        let nl = text.find('\n').unwrap_or(text.len());
        text.replace_range(nl..nl, &format!(" lowpass_hz={lp}"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a noise segment along with its anti-alias metadata.
pub fn read_segment_csv(path: &Path) -> Result<(Waveform, SegmentMetadata)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let w = Waveform::from_csv_str(&text)?;
    let mut meta = SegmentMetadata::default();
    if let Some(header) = text.lines().next() {
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some(value) = token.strip_prefix("lowpass_hz=") {
                meta.lowpass_hz = value.parse().ok();
            }
        }
    }
    Ok((w, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{synthesize_noise, NoiseModel, SensorModel};
    use crate::sweep::BodeTable;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_segment(rng: &mut ChaCha8Rng, n: usize, rate: f64, sigma: f64) -> Waveform {
        let samples: Vec<f64> = (0..n)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn zero_segments_give_zero_density() {
        let segs = vec![Waveform::new(vec![0.0; 256], 1000.0).unwrap(); 4];
        let psd = averaged_periodogram(&segs).unwrap();
        assert!(psd.density().iter().all(|&d| d == 0.0));
        assert_eq!(psd.n_averages(), 4);
        assert_relative_eq!(psd.resolution_bw(), 1000.0 / 256.0);
    }

    #[test]
    fn pure_tone_power_lands_in_its_bin() {
        let n = 2048;
        let rate = 8192.0;
        let amp = 3.0;
        let k = 100;
        let f = k as f64 * rate / n as f64;
        let seg = Waveform::sine(f, amp, 0.7, rate, n).unwrap();
        let psd = averaged_periodogram(&[seg]).unwrap();
        let peak_power = psd.density()[k] * psd.resolution_bw();
        assert_relative_eq!(peak_power, amp * amp / 2.0, max_relative = 1e-6);
        // neighbors carry nothing for a bin-exact tone
        assert!(psd.density()[k - 1] * psd.resolution_bw() < 1e-12 * amp * amp);
    }

    #[test]
    fn deterministic_white_noise_is_flat_per_bin() {
        // Synthesized white noise has deterministic bin magnitudes, so the
        // averaged PSD must equal the model density bin for bin.
        let m = SensorModel::default_phase(2);
        let density = 20e-6f64;
        let nm = NoiseModel::new(density, Vec::new(), 0.0).unwrap();
        let rate = 4096.0;
        let segs: Vec<Waveform> = (0..8)
            .map(|s| synthesize_noise(&nm, &m, 1.0, rate, s).unwrap())
            .collect();
        let psd = averaged_periodogram(&segs).unwrap();
        let want = density * density;
        for (k, (&f, &d)) in psd.freqs().iter().zip(psd.density()).enumerate() {
            if f < psd.resolution_bw() / 2.0 || k == psd.density().len() - 1 {
                continue; // dc is zeroed by synthesis; Nyquist folds
            }
            assert_relative_eq!(d, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn gaussian_white_noise_psd_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rate = 2000.0;
        let sigma = 0.5;
        let n = 512;
        let segs: Vec<Waveform> = (0..128)
            .map(|_| gaussian_segment(&mut rng, n, rate, sigma))
            .collect();
        let psd = averaged_periodogram(&segs).unwrap();
        let expected = sigma * sigma / psd.nyquist();
        // Across-bin mean is tight even though single bins fluctuate.
        let interior = &psd.density()[1..n / 2];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert_relative_eq!(mean, expected, max_relative = 0.02);
        for &d in interior {
            assert!(
                (d - expected).abs() < 0.5 * expected,
                "bin deviates {d} vs {expected}"
            );
        }
    }

    #[test]
    fn per_bin_spread_scales_as_inverse_sqrt_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rate = 2000.0;
        let n = 512;
        let rel_spread = |n_avg: usize, rng: &mut ChaCha8Rng| {
            let segs: Vec<Waveform> = (0..n_avg)
                .map(|_| gaussian_segment(rng, n, rate, 1.0))
                .collect();
            let psd = averaged_periodogram(&segs).unwrap();
            let interior = &psd.density()[1..n / 2];
            let mean = interior.iter().sum::<f64>() / interior.len() as f64;
            let var = interior
                .iter()
                .map(|d| (d - mean) * (d - mean))
                .sum::<f64>()
                / (interior.len() - 1) as f64;
            var.sqrt() / mean
        };
        let s8 = rel_spread(8, &mut rng);
        let s128 = rel_spread(128, &mut rng);
        let ratio = s8 / s128;
        assert!(
            (ratio - 4.0).abs() <= 1.2,
            "spread ratio {ratio} (want 4 ± 30%)"
        );
    }

    #[test]
    fn heterogeneous_segments_are_rejected() {
        let a = Waveform::new(vec![0.0; 256], 1000.0).unwrap();
        let b = Waveform::new(vec![0.0; 128], 1000.0).unwrap();
        assert!(matches!(
            averaged_periodogram(&[a.clone(), b]),
            Err(Error::Mismatch(_))
        ));
        let c = Waveform::new(vec![0.0; 256], 2000.0).unwrap();
        assert!(matches!(
            averaged_periodogram(&[a, c]),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn flat_density_band_rms_is_exact() {
        let m = SensorModel::default_phase(2);
        let nm = NoiseModel::new(10e-6, Vec::new(), 0.0).unwrap();
        let segs: Vec<Waveform> = (0..4)
            .map(|s| synthesize_noise(&nm, &m, 1.0, 2048.0, s).unwrap())
            .collect();
        let psd = averaged_periodogram(&segs).unwrap();
        let rms = band_rms(&psd, 100.0, 500.0).unwrap();
        assert_relative_eq!(rms, 10e-6 * 400.0f64.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn tone_inside_band_integrates_to_its_rms() {
        let n = 4096;
        let rate = 8192.0;
        let k = 200;
        let f = k as f64 * rate / n as f64;
        let amp = 0.25;
        let seg = Waveform::sine(f, amp, 0.0, rate, n).unwrap();
        let psd = averaged_periodogram(&[seg]).unwrap();
        let rms = band_rms(&psd, f - 50.0, f + 50.0).unwrap();
        assert_relative_eq!(rms, amp / std::f64::consts::SQRT_2, max_relative = 1e-6);
    }

    #[test]
    fn band_outside_grid_is_rejected() {
        let seg = Waveform::new(vec![0.0; 256], 1000.0).unwrap();
        let psd = averaged_periodogram(&[seg]).unwrap();
        assert!(matches!(
            band_rms(&psd, 100.0, 600.0),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            band_rms(&psd, -1.0, 100.0),
            Err(Error::OutOfRange(_))
        ));
        assert!(band_rms(&psd, 100.0, 500.0).is_ok());
    }

    #[test]
    fn psd_band_rms_matches_pooled_time_rms() {
        let m = SensorModel::default_phase(2);
        let segs: Vec<Waveform> = (0..8)
            .map(|s| synthesize_noise(&m.noise, &m, 1.0, 10_000.0, s).unwrap())
            .collect();
        let psd = averaged_periodogram(&segs).unwrap();
        let full = band_rms(&psd, 0.0, psd.nyquist()).unwrap();
        let pooled = (segs.iter().map(|s| s.rms().powi(2)).sum::<f64>() / segs.len() as f64)
            .sqrt();
        assert_relative_eq!(full, pooled, max_relative = 0.01);
    }

    #[test]
    fn min_detectable_reproduces_quoted_ratio() {
        // 1.4 mV of output noise against |H(60)| = 4.67e-3 reads back as
        // ~0.30 V rms of input.
        let table = BodeTable::from_points(vec![
            (10.0, Complex64::new(3.0e-3, 0.0)),
            (60.0, Complex64::new(4.67e-3, 0.0)),
            (100.0, Complex64::new(5.0e-3, 0.0)),
        ])
        .unwrap();
        let v = min_detectable_input(1.4e-3, &table, 60.0).unwrap();
        assert_relative_eq!(v, 1.4e-3 / 4.67e-3, max_relative = 1e-9);
        assert!((0.255..=0.345).contains(&v));
    }

    #[test]
    fn min_detectable_at_resonance_is_a_few_millivolts() {
        let m = SensorModel::default_phase(2);
        let grid = crate::waveform::FrequencyGrid::log_spaced(1.0, 10_000.0, 200).unwrap();
        let table = BodeTable::from_model(&m, &grid).unwrap();
        let noise_rms = m.noise.expected_band_rms(&m, 10.0, 3000.0).unwrap();
        let v = min_detectable_input(noise_rms, &table, m.resonance_peak_frequency()).unwrap();
        // ~31 dB of resonant gain over the flat band brings the floor down
        // to the single-digit-millivolt scale.
        assert!(
            (4.5e-3..=9.5e-3).contains(&v),
            "min detectable at resonance {v}"
        );
    }

    #[test]
    fn unity_response_min_detectable_equals_noise() {
        let table = BodeTable::from_points(vec![
            (1.0, Complex64::new(1.0, 0.0)),
            (100.0, Complex64::new(1.0, 0.0)),
        ])
        .unwrap();
        let v = min_detectable_input(2.5e-3, &table, 10.0).unwrap();
        assert_relative_eq!(v, 2.5e-3, max_relative = 1e-12);
    }

    #[test]
    fn dynamic_range_examples() {
        assert_relative_eq!(
            dynamic_range(280.0, 0.30).unwrap(),
            59.4007,
            epsilon = 0.0001
        );
        assert_relative_eq!(
            dynamic_range(3e-6, 1.5e-9).unwrap(),
            66.0206,
            epsilon = 0.0001
        );
        assert_relative_eq!(dynamic_range(7.0, 0.7).unwrap(), 20.0, max_relative = 1e-12);
        assert!(dynamic_range(0.0, 1.0).is_err());
        assert!(dynamic_range(1.0, -2.0).is_err());
        assert!(dynamic_range(1.0, 2.0).is_err());
    }

    #[test]
    fn antialiasing_contract_refuses_unfiltered_segments() {
        let filtered = SegmentMetadata {
            lowpass_hz: Some(1000.0),
        };
        let unfiltered = SegmentMetadata::default();
        // content below Nyquist declared: anything goes
        check_antialiasing(&[unfiltered], 2500.0, Some(2000.0)).unwrap();
        check_antialiasing(&[unfiltered], 2500.0, None).unwrap();
        // content above Nyquist declared: unfiltered segments are refused
        assert!(matches!(
            check_antialiasing(&[filtered, unfiltered], 2500.0, Some(5000.0)),
            Err(Error::AliasingRisk(_))
        ));
        check_antialiasing(&[filtered, filtered], 2500.0, Some(5000.0)).unwrap();
        // a filter above Nyquist does not help
        let bad = SegmentMetadata {
            lowpass_hz: Some(4000.0),
        };
        assert!(matches!(
            check_antialiasing(&[bad], 2500.0, Some(5000.0)),
            Err(Error::AliasingRisk(_))
        ));
    }

    #[test]
    fn segment_metadata_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.csv");
        let w = Waveform::new(vec![0.5, -0.25, 0.125], 5000.0).unwrap();
        write_segment_csv(
            &path,
            &w,
            &SegmentMetadata {
                lowpass_hz: Some(1000.0),
            },
        )
        .unwrap();
        let (back, meta) = read_segment_csv(&path).unwrap();
        assert_eq!(back, w);
        assert_eq!(meta.lowpass_hz, Some(1000.0));
        // plain waveform files read back as unfiltered
        let plain = dir.path().join("plain.csv");
        w.write_csv(&plain).unwrap();
        let (_, meta) = read_segment_csv(&plain).unwrap();
        assert_eq!(meta.lowpass_hz, None);
    }

    #[test]
    fn presets_match_the_two_range_protocol() {
        let low = range_preset("lowband").unwrap();
        assert_relative_eq!(low.sample_rate, 5_000.0);
        assert_relative_eq!(low.lowpass_hz, 1_000.0);
        let high = range_preset("highband").unwrap();
        assert_relative_eq!(high.sample_rate, 50_000.0);
        assert_relative_eq!(high.lowpass_hz, 10_000.0);
        assert!(range_preset("midband").is_none());
        // both presets place the filter at or below Nyquist
        for p in [low, high] {
            assert!(p.lowpass_hz <= p.sample_rate / 2.0);
        }
    }
}
