//! Transducer curve analyses: operating-point selection on the
//! displacement/optical-power curve, log-log linearity fitting, and
//! displacement-domain dynamic range.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Collected optical power vs. fiber-probe/transducer separation.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementCurve {
    /// `(displacement_um, normalized optical power)`, strictly increasing
    /// in displacement.
    points: Vec<(f64, f64)>,
}

impl DisplacementCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "displacement curve needs at least 3 points, got {}",
                points.len()
            )));
        }
        for pair in points.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::InvalidInput(format!(
                    "displacements must be strictly increasing, got {} after {}",
                    pair[1].0, pair[0].0
                )));
            }
        }
        if let Some(&(d, p)) = points.iter().find(|&&(_, p)| !(p >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "powers must be non-negative, got {p} at {d} um"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Shape-level stand-in for a measured probe curve: a steep rise with
    /// its maximum slope at 280 um, leveling off around 500 um and
    /// declining gently thereafter. Sampled every 20 um. Not calibrated
    /// data; used for shape tests and demos only.
    pub fn reference_fixture() -> Self {
        let points = (0..=40)
            .map(|i| {
                let d = i as f64 * 20.0;
                let rise = 1.0 / (1.0 + (-(d - 280.0) / 90.0).exp());
                let fall = if d > 500.0 {
                    1.0 - 2.5e-4 * (d - 500.0)
                } else {
                    1.0
                };
                (d, rise * fall)
            })
            .collect();
        Self::new(points).expect("fixture is well-formed")
    }

    /// CSV with header `displacement_um,power_norm`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("displacement_um,power_norm\n");
        for (d, p) in &self.points {
            let _ = writeln!(out, "{d},{p}");
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
            .ok_or_else(|| Error::Format("empty curve file".into()))?
            .trim_end_matches('\r');
        if header != "displacement_um,power_norm" {
            return Err(Error::Format(format!(
                "unexpected curve header '{header}' (want displacement_um,power_norm)"
            )));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r').trim();
            if line.is_empty() {
                continue;
            }
            let (d, p) = line.split_once(',').ok_or_else(|| {
                Error::Format(format!("row {}: expected two fields", i + 2))
            })?;
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: '{s}' is not a number", i + 2)))
            };
            points.push((num(d)?, num(p)?));
        }
        Self::new(points)
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

/// Operating point: the steepest region of the curve.
///
/// Slopes are central differences at interior points; the result is the
/// midpoint of the span used by the winning difference together with the
/// signed slope there. Ties go to the smallest displacement.
pub fn operating_point(curve: &DisplacementCurve) -> Result<(f64, f64)> {
    let pts = curve.points();
    let mut best: Option<(f64, f64)> = None;
    for i in 1..pts.len() - 1 {
        let (d0, p0) = pts[i - 1];
        let (d1, p1) = pts[i + 1];
        let slope = (p1 - p0) / (d1 - d0);
        let midpoint = (d0 + d1) / 2.0;
        let better = match best {
            None => true,
            Some((_, s)) => slope.abs() > s.abs(),
        };
        if better {
            best = Some((midpoint, slope));
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no interior points".into()))
}

/// Least-squares fit of `log10(output)` against `log10(input)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityFit {
    /// Log-log slope (1.0 for a perfectly linear device).
    pub slope: f64,
    /// Standard error of the slope from the residual variance.
    pub slope_stderr: f64,
    /// Intercept in log10 volts.
    pub intercept: f64,
}

pub fn loglog_linearity(inputs: &[f64], outputs: &[f64]) -> Result<LinearityFit> {
    if inputs.len() != outputs.len() {
        return Err(Error::Mismatch(format!(
            "{} inputs vs {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    if inputs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "linearity fit needs at least 3 pairs, got {}",
            inputs.len()
        )));
    }
    for &v in inputs.iter().chain(outputs) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "all values must be positive for a log-log fit, got {v}"
            )));
        }
    }
    let n = inputs.len() as f64;
    let xs: Vec<f64> = inputs.iter().map(|v| v.log10()).collect();
    let ys: Vec<f64> = outputs.iter().map(|v| v.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "all inputs are equal; slope is undefined".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let slope_stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(LinearityFit {
        slope,
        slope_stderr,
        intercept,
    })
}

/// `20·log10(max_pp / min_detectable)` in dB; both in the same units.
pub fn displacement_dynamic_range(max_pp: f64, min_detectable: f64) -> Result<f64> {
    if !(max_pp > 0.0) || !(min_detectable > 0.0) {
        return Err(Error::InvalidInput(format!(
            "displacements must be positive, got {max_pp} and {min_detectable}"
        )));
    }
    Ok(20.0 * (max_pp / min_detectable).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixture_operating_point_sits_at_280_um() {
        let curve = DisplacementCurve::reference_fixture();
        let (d, slope) = operating_point(&curve).unwrap();
        assert_relative_eq!(d, 280.0, epsilon = 1e-9);
        assert!(slope > 0.0);
        // power rises to a plateau near 500 um and declines after
        let p500 = curve.points().iter().find(|p| p.0 == 500.0).unwrap().1;
        let p800 = curve.points().iter().find(|p| p.0 == 800.0).unwrap().1;
        assert!(p500 > 0.9);
        assert!(p800 < p500 + 0.05);
    }

    #[test]
    fn straight_line_ties_break_to_smallest_displacement() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let curve = DisplacementCurve::new(pts).unwrap();
        let (d, slope) = operating_point(&curve).unwrap();
        assert_relative_eq!(d, 1.0); // midpoint of the first interior span
        assert_relative_eq!(slope, 2.0);
    }

    #[test]
    fn symmetric_triangle_returns_rising_edge() {
        let pts: Vec<(f64, f64)> = (0..=10)
            .map(|i| {
                let d = i as f64;
                (d, if d <= 5.0 { d } else { 10.0 - d })
            })
            .collect();
        let curve = DisplacementCurve::new(pts).unwrap();
        let (d, _) = operating_point(&curve).unwrap();
        assert!(d < 5.0, "tie-break must pick the rising edge, got {d}");
    }

    #[test]
    fn operating_point_is_invariant_under_power_scaling() {
        let curve = DisplacementCurve::reference_fixture();
        let scaled = DisplacementCurve::new(
            curve.points().iter().map(|&(d, p)| (d, 7.5 * p)).collect(),
        )
        .unwrap();
        assert_relative_eq!(
            operating_point(&curve).unwrap().0,
            operating_point(&scaled).unwrap().0
        );
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(matches!(
            DisplacementCurve::new(vec![(0.0, 0.0), (1.0, 1.0)]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn proportional_data_fits_unit_slope() {
        let inputs: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
        let outputs: Vec<f64> = inputs.iter().map(|v| 3.3 * v).collect();
        let fit = loglog_linearity(&inputs, &outputs).unwrap();
        assert_relative_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert_relative_eq!(fit.intercept, 3.3f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn quadratic_data_fits_slope_two() {
        let inputs: Vec<f64> = (1..=15).map(|i| 0.5 * i as f64).collect();
        let outputs: Vec<f64> = inputs.iter().map(|v| 0.8 * v * v).collect();
        let fit = loglog_linearity(&inputs, &outputs).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn output_scaling_shifts_intercept_only() {
        let inputs: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let outputs: Vec<f64> = inputs.iter().map(|v| 1.7 * v.powf(1.1)).collect();
        let base = loglog_linearity(&inputs, &outputs).unwrap();
        let scaled_out: Vec<f64> = outputs.iter().map(|v| 10.0 * v).collect();
        let scaled = loglog_linearity(&inputs, &scaled_out).unwrap();
        assert_relative_eq!(base.slope, scaled.slope, epsilon = 1e-12);
        assert_relative_eq!(scaled.intercept - base.intercept, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_positive_values_are_rejected() {
        assert!(matches!(
            loglog_linearity(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            loglog_linearity(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn displacement_dynamic_range_examples() {
        let db = displacement_dynamic_range(3e-6, 1.5e-9).unwrap();
        assert_relative_eq!(db, 66.0206, epsilon = 0.0001);
        // ratio itself: 1.5 nm is 0.05% of 3 um
        assert_relative_eq!(1.5e-9 / 3e-6, 5e-4, max_relative = 1e-12);
        assert_relative_eq!(displacement_dynamic_range(1.0, 1.0).unwrap(), 0.0);
        // common unit change leaves the value alone
        assert_relative_eq!(
            displacement_dynamic_range(3.0, 0.0015).unwrap(),
            db,
            epsilon = 1e-9
        );
        assert!(displacement_dynamic_range(-1.0, 1.0).is_err());
    }

    #[test]
    fn curve_csv_round_trips() {
        let curve = DisplacementCurve::reference_fixture();
        let text = curve.to_csv_string();
        let back = DisplacementCurve::from_csv_str(&text).unwrap();
        assert_eq!(back, curve);
        assert!(DisplacementCurve::from_csv_str("bad,header\n1,2\n").is_err());
    }
}
