//! Command-line entry point binding the library modules into the five
//! measurement workflows: simulate, characterize, noise, equalize, and
//! transducer. All configuration is explicit (no environment variables),
//! outputs are written atomically (temp file + rename), and a fixed seed
//! makes every run byte-identical.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use voltsense::equalizer::{pulse_metrics, reconstruct, square_pulse, ApodizationSpec, Notch};
use voltsense::noise::{
    averaged_periodogram, band_rms, check_antialiasing, dynamic_range, min_detectable_input,
    range_preset, read_segment_csv, write_segment_csv, DynamicRangeEntry, SegmentMetadata,
    SensitivityReport,
};
use voltsense::sensor::{synthesize_noise, NoiseModel, SensorModel};
use voltsense::sweep::{plan_sweep, run_sweep, BodeTable, SweepSource};
use voltsense::transducer::{loglog_linearity, operating_point, DisplacementCurve};
use voltsense::{Error, FrequencyGrid, Waveform};

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  2  command-line usage error
  3  file I/O failure
  4  malformed input file
  5  invalid parameters or configuration
  6  processing failure (degenerate ratio, coverage, conditioning, ...)

Errors are reported on stderr as one line: error[<category>]: <message>";

#[derive(Parser)]
#[command(
    name = "voltsense",
    version,
    about = "Sensor simulation, characterization, noise analysis, and spectral equalization",
    after_long_help = EXIT_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sensor response to a square pulse, writing the
    /// input/output waveform pair as CSV.
    Simulate(SimulateArgs),
    /// Measure a frequency response by swept-sine estimation and write a
    /// Bode table.
    Characterize(CharacterizeArgs),
    /// Estimate the output noise PSD, band rms, and input-referred
    /// sensitivity.
    Noise(NoiseArgs),
    /// Reconstruct the input waveform from a distorted output record by
    /// apodized inverse filtering.
    Equalize(EqualizeArgs),
    /// Transducer curve analyses: operating point and log-log linearity.
    Transducer(TransducerArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Sensor model: builtin name (default_phase1|2|3) or config file path.
    #[arg(long)]
    model: String,
    /// Square pulse as amplitude_volts:duration_seconds, centered in the
    /// record.
    #[arg(long, value_parser = parse_pulse)]
    pulse: (f64, f64),
    /// Sample rate in S/s.
    #[arg(long, default_value_t = 25_000.0)]
    rate: f64,
    /// Record duration in seconds. Default: max(4x pulse, pulse + 0.15 s),
    /// which leaves room for the resonant ring-down.
    #[arg(long)]
    record: Option<f64>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable the model's output noise.
    #[arg(long)]
    no_noise: bool,
    /// Directory for in.csv and out.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CharacterizeArgs {
    /// Sensor model to drive synthetically (builtin name or config path).
    #[arg(long, conflicts_with = "data")]
    model: Option<String>,
    /// Directory of recorded waveform pairs
    /// (point####_trace###_{in,out}.csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Probe grid as lo_hz:hi_hz:points_per_decade (log spaced).
    #[arg(long, default_value = "1:10000:40", value_parser = parse_grid)]
    grid: (f64, f64, usize),
    /// Traces averaged per frequency.
    #[arg(long, default_value_t = 16)]
    averages: usize,
    /// Drive amplitude in volts (synthetic mode).
    #[arg(long, default_value_t = 10.0)]
    amplitude: f64,
    /// Noise seed (synthetic mode).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable the model's output noise (synthetic mode).
    #[arg(long)]
    no_noise: bool,
    /// Output Bode table CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    /// Sensor model whose noise is synthesized (builtin name or config
    /// path).
    #[arg(long, conflicts_with = "input")]
    model: Option<String>,
    /// Directory of recorded no-input segments (waveform CSV, optional
    /// lowpass_hz= header token).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Acquisition preset: lowband (1 kHz filter @ 5 kS/s) or highband
    /// (10 kHz filter @ 50 kS/s).
    #[arg(long, default_value = "highband")]
    preset: String,
    /// Number of segments to synthesize and average (synthetic mode; in
    /// --input mode every .csv in the directory is used).
    #[arg(long, default_value_t = 128)]
    segments: usize,
    /// Segment duration in seconds (synthetic mode).
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Integration band as lo_hz:hi_hz.
    #[arg(long, default_value = "10:3000", value_parser = parse_band)]
    band: (f64, f64),
    /// Noise seed (synthetic mode).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bode table for input-referred sensitivity and dynamic range.
    #[arg(long)]
    response: Option<PathBuf>,
    /// Report the minimum detectable input at this frequency (repeatable).
    #[arg(long = "at")]
    at: Vec<f64>,
    /// Declared maximum frequency present at the sensor output; recorded
    /// segments must be low-pass filtered when this exceeds Nyquist.
    #[arg(long)]
    content_max: Option<f64>,
    /// Largest unsaturated input in V rms for the dynamic-range figure
    /// (computed from the model when omitted and a model is given).
    #[arg(long)]
    vmax: Option<f64>,
    /// Frequency at which the dynamic range is stated.
    #[arg(long, default_value_t = 60.0)]
    dr_freq: f64,
    /// Write the synthesized segments to this directory.
    #[arg(long)]
    save_segments: Option<PathBuf>,
    /// Output PSD CSV.
    #[arg(long)]
    out: PathBuf,
    /// Machine-readable sensitivity report CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EqualizeArgs {
    /// Sensor output record (waveform CSV).
    #[arg(long)]
    input: PathBuf,
    /// Measured Bode table CSV from `characterize`.
    #[arg(long)]
    response: PathBuf,
    /// Low apodization edge in Hz.
    #[arg(long, default_value_t = 10.0)]
    flow: f64,
    /// High apodization edge in Hz.
    #[arg(long, default_value_t = 4000.0)]
    fhigh: f64,
    /// Spur notch as center_hz:width_hz (repeatable).
    #[arg(long, value_parser = parse_notch)]
    notch: Vec<Notch>,
    /// True input record for amplitude-error metrics.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output reconstructed waveform CSV.
    #[arg(long)]
    out: PathBuf,
    /// Pulse metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct TransducerArgs {
    /// Displacement curve CSV (displacement_um,power_norm): prints the
    /// operating point.
    #[arg(long, conflicts_with = "linearity")]
    curve: Option<PathBuf>,
    /// Input/output pairs CSV (input_v,output_v): prints the log-log fit.
    #[arg(long)]
    linearity: Option<PathBuf>,
}

fn parse_pulse(s: &str) -> Result<(f64, f64), String> {
    let (a, d) = s
        .split_once(':')
        .ok_or("expected amplitude_volts:duration_seconds")?;
    let amp: f64 = a.parse().map_err(|_| format!("bad amplitude '{a}'"))?;
    let dur: f64 = d.parse().map_err(|_| format!("bad duration '{d}'"))?;
    if dur.is_nan() || dur <= 0.0 {
        return Err("duration must be positive".into());
    }
    Ok((amp, dur))
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo_hz:hi_hz")?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad frequency '{lo}'"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad frequency '{hi}'"))?;
    if !(lo >= 0.0 && hi > lo) {
        return Err("need 0 <= lo < hi".into());
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo_hz:hi_hz:points_per_decade".into());
    }
    let lo: f64 = parts[0].parse().map_err(|_| "bad lo".to_string())?;
    let hi: f64 = parts[1].parse().map_err(|_| "bad hi".to_string())?;
    let ppd: usize = parts[2].parse().map_err(|_| "bad points/decade".to_string())?;
    if !(lo > 0.0 && hi > lo && ppd > 0) {
        return Err("need 0 < lo < hi and points_per_decade > 0".into());
    }
    Ok((lo, hi, ppd))
}

fn parse_notch(s: &str) -> Result<Notch, String> {
    let (c, w) = s.split_once(':').ok_or("expected center_hz:width_hz")?;
    let center_hz: f64 = c.parse().map_err(|_| format!("bad center '{c}'"))?;
    let width_hz: f64 = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    if !(center_hz > 0.0 && width_hz > 0.0) {
        return Err("notch center and width must be positive".into());
    }
    Ok(Notch {
        center_hz,
        width_hz,
    })
}

fn error_category(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Io(_) => ("io", 3),
        Error::Format(_) => ("format", 4),
        Error::InvalidInput(_) => ("invalid-input", 5),
        Error::Mismatch(_) => ("mismatch", 5),
        Error::OutOfBand(_) => ("out-of-band", 5),
        Error::OutOfRange(_) => ("out-of-range", 5),
        Error::AliasingRisk(_) => ("aliasing-risk", 5),
        Error::Planning(_) => ("planning", 5),
        Error::InsufficientData(_) => ("insufficient-data", 5),
        Error::Config(_) => ("config", 5),
        Error::DegenerateDivision(_) => ("degenerate-division", 6),
        Error::Coverage(_) => ("coverage", 6),
        Error::IllConditioned(_) => ("ill-conditioned", 6),
        Error::NotPulseLike(_) => ("not-pulse-like", 6),
        Error::Undetectable(_) => ("undetectable", 6),
        Error::SymmetryViolation(_) => ("symmetry", 6),
    }
}

/// Write through a temp file in the same directory, then rename.
fn write_atomic(path: &Path, content: &str) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match (dir, path.file_name()) {
        (Some(dir), Some(name)) => {
            dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()))
        }
        _ => PathBuf::from(format!("{}.tmp{}", path.display(), std::process::id())),
    };
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_model(name_or_path: &str, no_noise: bool) -> Result<SensorModel, Error> {
    let mut model = SensorModel::load(name_or_path)?;
    if no_noise {
        model.noise = NoiseModel::silent();
    }
    Ok(model)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let model = load_model(&args.model, args.no_noise)?;
    let (amplitude, duration) = args.pulse;
    let record = args
        .record
        .unwrap_or_else(|| (4.0 * duration).max(duration + 0.15));
    let v_in = square_pulse(amplitude, duration, args.rate, record)?;
    let out = model.simulate_output(&v_in, args.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_atomic(&args.out_dir.join("in.csv"), &v_in.to_csv_string())?;
    write_atomic(&args.out_dir.join("out.csv"), &out.waveform.to_csv_string())?;
    println!(
        "wrote {}/in.csv and out.csv ({} samples at {} S/s); saturated: {}",
        args.out_dir.display(),
        v_in.len(),
        args.rate,
        out.saturated
    );
    Ok(())
}

fn cmd_characterize(args: &CharacterizeArgs) -> Result<(), Error> {
    let (lo, hi, ppd) = args.grid;
    let grid = FrequencyGrid::log_spaced(lo, hi, ppd)?;
    let plan = plan_sweep(&grid, args.averages)?;
    let table = match (&args.model, &args.data) {
        (Some(name), None) => {
            let model = load_model(name, args.no_noise)?;
            run_sweep(
                &SweepSource::Model {
                    model: &model,
                    amplitude: args.amplitude,
                    seed: args.seed,
                },
                &plan,
            )?
        }
        (None, Some(dir)) => run_sweep(&SweepSource::Recorded { dir: dir.clone() }, &plan)?,
        _ => {
            return Err(Error::InvalidInput(
                "characterize needs exactly one of --model or --data".into(),
            ))
        }
    };
    write_atomic(&args.out, &table.to_csv_string())?;
    println!(
        "wrote {} ({} rows, {} averages)",
        args.out.display(),
        table.rows().len(),
        args.averages
    );
    Ok(())
}

fn cmd_noise(args: &NoiseArgs) -> Result<(), Error> {
    let preset = range_preset(&args.preset).ok_or_else(|| {
        Error::InvalidInput(format!(
            "unknown preset '{}' (expected lowband or highband)",
            args.preset
        ))
    })?;
    if args.segments == 0 {
        return Err(Error::InvalidInput("need at least one segment".into()));
    }
    let model = match &args.model {
        Some(name) => Some(load_model(name, false)?),
        None => None,
    };
    let segments: Vec<Waveform> = match (&model, &args.input) {
        (Some(model), None) => (0..args.segments)
            .map(|i| {
                synthesize_noise(
                    &model.noise,
                    model,
                    args.duration,
                    preset.sample_rate,
                    args.seed.wrapping_add(i as u64),
                )
            })
            .collect::<Result<_, _>>()?,
        (None, Some(dir)) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no .csv segments found in {}",
                    dir.display()
                )));
            }
            let mut segs = Vec::new();
            let mut metas = Vec::new();
            for p in &paths {
                let (w, meta) = read_segment_csv(p)?;
                metas.push(meta);
                segs.push(w);
            }
            let nyquist = segs[0].sample_rate() / 2.0;
            check_antialiasing(&metas, nyquist, args.content_max)?;
            segs
        }
        _ => {
            return Err(Error::InvalidInput(
                "noise needs exactly one of --model or --input".into(),
            ))
        }
    };
    if let Some(dir) = &args.save_segments {
        std::fs::create_dir_all(dir)?;
        let meta = SegmentMetadata {
            lowpass_hz: Some(preset.lowpass_hz),
        };
        for (i, seg) in segments.iter().enumerate() {
            write_segment_csv(&dir.join(format!("segment{i:04}.csv")), seg, &meta)?;
        }
    }
    let psd = averaged_periodogram(&segments)?;
    write_atomic(&args.out, &psd.to_csv_string())?;

    let (band_lo, band_hi) = args.band;
    let rms = band_rms(&psd, band_lo, band_hi)?;
    let response = match &args.response {
        Some(path) => Some(BodeTable::read_csv(path)?),
        None => None,
    };
    let mut min_detectable = Vec::new();
    let mut dr = None;
    if let Some(table) = &response {
        let mut freqs = args.at.clone();
        if freqs.is_empty() {
            freqs.push(args.dr_freq);
            // the most sensitive point of the response
            let peak = table
                .rows()
                .iter()
                .max_by(|a, b| a.value.norm().total_cmp(&b.value.norm()))
                .map(|r| r.freq_hz);
            if let Some(f) = peak {
                freqs.push(f);
            }
        }
        for &f in &freqs {
            min_detectable.push((f, min_detectable_input(rms, table, f)?));
        }
        let v_min_at_dr = min_detectable_input(rms, table, args.dr_freq)?;
        let v_max = match (args.vmax, &model) {
            (Some(v), _) => Some(v),
            (None, Some(m)) => {
                let headroom =
                    (m.v_quiescent - m.v_clip_low).min(m.v_clip_high - m.v_quiescent);
                let mag = table.response_at(args.dr_freq)?.norm();
                Some(headroom / std::f64::consts::SQRT_2 / mag)
            }
            (None, None) => None,
        };
        if let Some(v_max) = v_max {
            dr = Some(DynamicRangeEntry {
                freq_hz: args.dr_freq,
                v_max_rms: v_max,
                v_min_rms: v_min_at_dr,
                range_db: dynamic_range(v_max, v_min_at_dr)?,
            });
        }
    }
    let report = SensitivityReport {
        band: args.band,
        band_rms: rms,
        min_detectable,
        dynamic_range: dr,
    };
    print!("{}", report.to_text());
    if let Some(path) = &args.report {
        write_atomic(path, &report.to_csv_string())?;
    }
    Ok(())
}

fn cmd_equalize(args: &EqualizeArgs) -> Result<(), Error> {
    let v_out = Waveform::read_csv(&args.input)?;
    let response = BodeTable::read_csv(&args.response)?;
    let spec = ApodizationSpec::with_notches(args.flow, args.fhigh, args.notch.clone())?;
    let rec = reconstruct(&v_out, &response, &spec)?;
    let reference = match &args.reference {
        Some(path) => Some(Waveform::read_csv(path)?),
        None => None,
    };
    let metrics = match (&args.metrics, &reference) {
        (None, None) => rec.metrics,
        _ => Some(pulse_metrics(&rec.estimate, reference.as_ref())?),
    };
    write_atomic(&args.out, &rec.estimate.to_csv_string())?;
    if let Some(m) = &metrics {
        println!(
            "peak {:.4} V, fwhm {:.6} s, ringing rms {:.5} V{}",
            m.peak_amplitude,
            m.fwhm,
            m.residual_ringing_rms,
            match m.amplitude_error_pct {
                Some(e) => format!(", amplitude error {e:.2}%"),
                None => String::new(),
            }
        );
    }
    if let Some(path) = &args.metrics {
        let m = metrics.as_ref().expect("metrics computed when requested");
        let mut text = String::from("metric,value\n");
        text.push_str(&format!("peak_amplitude_v,{}\n", m.peak_amplitude));
        text.push_str(&format!("fwhm_s,{}\n", m.fwhm));
        if let Some(e) = m.amplitude_error_pct {
            text.push_str(&format!("amplitude_error_pct,{e}\n"));
        }
        text.push_str(&format!("residual_ringing_rms_v,{}\n", m.residual_ringing_rms));
        write_atomic(path, &text)?;
    }
    Ok(())
}

fn cmd_transducer(args: &TransducerArgs) -> Result<(), Error> {
    match (&args.curve, &args.linearity) {
        (Some(path), None) => {
            let curve = DisplacementCurve::read_csv(path)?;
            let (d, slope) = operating_point(&curve)?;
            println!("operating point: {d} um (slope {slope} per um)");
            Ok(())
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
            })?;
            let mut lines = text.lines();
            let header = lines
                .next()
                .ok_or_else(|| Error::Format("empty pairs file".into()))?
                .trim_end_matches('\r');
            if header != "input_v,output_v" {
                return Err(Error::Format(format!(
                    "unexpected pairs header '{header}' (want input_v,output_v)"
                )));
            }
            let mut inputs = Vec::new();
            let mut outputs = Vec::new();
            for (i, line) in lines.enumerate() {
                let line = line.trim_end_matches('\r').trim();
                if line.is_empty() {
                    continue;
                }
                let (a, b) = line.split_once(',').ok_or_else(|| {
                    Error::Format(format!("row {}: expected two fields", i + 2))
                })?;
                let num = |s: &str| -> Result<f64, Error> {
                    s.trim().parse().map_err(|_| {
                        Error::Format(format!("row {}: '{s}' is not a number", i + 2))
                    })
                };
                inputs.push(num(a)?);
                outputs.push(num(b)?);
            }
            let fit = loglog_linearity(&inputs, &outputs)?;
            println!(
                "log-log slope: {:.4} +/- {:.4} (intercept {:.4})",
                fit.slope, fit.slope_stderr, fit.intercept
            );
            Ok(())
        }
        _ => Err(Error::InvalidInput(
            "transducer needs exactly one of --curve or --linearity".into(),
        )),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Characterize(args) => cmd_characterize(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Equalize(args) => cmd_equalize(args),
        Command::Transducer(args) => cmd_transducer(args),
    };
    if let Err(e) = result {
        let (category, code) = error_category(&e);
        eprintln!("error[{category}]: {e}");
        std::process::exit(code);
    }
}
