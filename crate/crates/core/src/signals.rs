//! Reference and excitation signal generators.
//!
//! Every generator samples `t = 0, dt, ..., duration - dt` (endpoint
//! exclusive), so consecutive segments concatenate without a duplicated
//! sample. Sample `k` is evaluated at `t = k * dt` directly rather than by
//! accumulating `dt`, which keeps series bit-identical under integer
//! downsampling of a finer grid.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sample period: 200 Hz refresh rate.
pub const DEFAULT_DT: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Deg,
    #[serde(rename = "kPa")]
    KPa,
    S,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Deg => "deg",
            Unit::KPa => "kPa",
            Unit::S => "s",
        }
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub dt: f64,
    pub unit: Unit,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64, unit: Unit) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSpec(format!("sample period must be positive, got {dt}")));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("sample {k} is not finite")));
        }
        Ok(Self { values, dt, unit })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Keep every `factor`-th sample.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidSpec("downsample factor must be >= 1".into()));
        }
        Ok(Self {
            values: self.values.iter().step_by(factor).copied().collect(),
            dt: self.dt * factor as f64,
            unit: self.unit,
        })
    }

    /// Two-column CSV `(t, value)` preceded by a `# unit:` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# unit: t=s, value={}", self.unit)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([self.time(k).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Declarative description of a generated signal, as stored in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    Sine {
        freq: f64,
        amplitude: f64,
        offset: f64,
        #[serde(default)]
        phase: f64,
        duration: f64,
    },
    Multisine {
        frequencies: Vec<f64>,
        amplitude: f64,
        offset: f64,
        #[serde(default)]
        phase: f64,
        duration: f64,
    },
    /// Linear frequency sweep starting at its minimum value.
    ChirpLinear {
        f_start: f64,
        f_end: f64,
        amplitude: f64,
        offset: f64,
        duration: f64,
    },
    /// `amplitude * sin(pi t (c2 t + c1) + phase) + offset`.
    ChirpQuadratic {
        amplitude: f64,
        offset: f64,
        c2: f64,
        c1: f64,
        #[serde(default)]
        phase: f64,
        duration: f64,
    },
}

impl SignalSpec {
    pub fn duration(&self) -> f64 {
        match self {
            SignalSpec::Sine { duration, .. }
            | SignalSpec::Multisine { duration, .. }
            | SignalSpec::ChirpLinear { duration, .. }
            | SignalSpec::ChirpQuadratic { duration, .. } => *duration,
        }
    }

    /// Number of summed sinusoids; bounds the output to `offset ± k·amplitude`.
    pub fn components(&self) -> usize {
        match self {
            SignalSpec::Multisine { frequencies, .. } => frequencies.len(),
            _ => 1,
        }
    }

    pub fn generate(&self, dt: f64, unit: Unit) -> Result<TimeSeries> {
        match self {
            SignalSpec::Sine { freq, amplitude, offset, phase, duration } => {
                gen_multisine(&[*freq], *amplitude, *offset, *phase, *duration, dt, unit)
            }
            SignalSpec::Multisine { frequencies, amplitude, offset, phase, duration } => {
                gen_multisine(frequencies, *amplitude, *offset, *phase, *duration, dt, unit)
            }
            SignalSpec::ChirpLinear { f_start, f_end, amplitude, offset, duration } => {
                gen_sweep_frequency(*f_start, *f_end, *amplitude, *offset, *duration, dt, unit)
            }
            SignalSpec::ChirpQuadratic { amplitude, offset, c2, c1, phase, duration } => {
                gen_chirp_quadratic(*amplitude, *offset, *c2, *c1, *phase, *duration, dt, unit)
            }
        }
    }
}

fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidSpec(format!("duration must be positive, got {duration}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidSpec(format!("dt must be positive, got {dt}")));
    }
    let n = (duration / dt).round() as usize;
    if n == 0 {
        return Err(Error::InvalidSpec(format!("duration {duration} s shorter than one sample")));
    }
    Ok(n)
}

fn check_amplitude(amplitude: f64, offset: f64) -> Result<()> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) || !offset.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "amplitude must be finite and >= 0, offset finite (got {amplitude}, {offset})"
        )));
    }
    Ok(())
}

fn sampled(n: usize, dt: f64, unit: Unit, f: impl Fn(f64) -> f64) -> Result<TimeSeries> {
    let values = (0..n).map(|k| f(k as f64 * dt)).collect();
    TimeSeries::new(values, dt, unit)
}

pub fn gen_sine(freq: f64, amplitude: f64, offset: f64, duration: f64, dt: f64, unit: Unit) -> Result<TimeSeries> {
    gen_multisine(&[freq], amplitude, offset, 0.0, duration, dt, unit)
}

pub fn gen_multisine(
    freqs: &[f64],
    amplitude: f64,
    offset: f64,
    phase: f64,
    duration: f64,
    dt: f64,
    unit: Unit,
) -> Result<TimeSeries> {
    if freqs.is_empty() {
        return Err(Error::InvalidSpec("multisine needs at least one frequency".into()));
    }
    if let Some(f) = freqs.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidSpec(format!("frequencies must be positive, got {f}")));
    }
    if !phase.is_finite() {
        return Err(Error::InvalidSpec("phase must be finite".into()));
    }
    check_amplitude(amplitude, offset)?;
    let n = sample_count(duration, dt)?;
    sampled(n, dt, unit, |t| {
        let s: f64 = freqs.iter().map(|f| (2.0 * PI * f * t + phase).sin()).sum();
        amplitude * s + offset
    })
}

#[allow(clippy::too_many_arguments)]
pub fn gen_chirp_quadratic(
    amplitude: f64,
    offset: f64,
    c2: f64,
    c1: f64,
    phase: f64,
    duration: f64,
    dt: f64,
    unit: Unit,
) -> Result<TimeSeries> {
    check_amplitude(amplitude, offset)?;
    if !(c2.is_finite() && c1.is_finite() && phase.is_finite()) {
        return Err(Error::InvalidSpec("chirp coefficients must be finite".into()));
    }
    let n = sample_count(duration, dt)?;
    sampled(n, dt, unit, |t| amplitude * (PI * t * (c2 * t + c1) + phase).sin() + offset)
}

/// Linear sweep from `f_start` to `f_end` over `duration`, phased so the
/// first sample sits at `offset - amplitude` (a ramp up from rest).
pub fn gen_sweep_frequency(
    f_start: f64,
    f_end: f64,
    amplitude: f64,
    offset: f64,
    duration: f64,
    dt: f64,
    unit: Unit,
) -> Result<TimeSeries> {
    if !(f_start > 0.0 && f_start.is_finite() && f_end.is_finite()) {
        return Err(Error::InvalidSpec(format!("sweep start frequency must be positive, got {f_start}")));
    }
    if f_start > f_end {
        return Err(Error::InvalidSpec(format!("sweep runs downward ({f_start} > {f_end} Hz)")));
    }
    check_amplitude(amplitude, offset)?;
    let n = sample_count(duration, dt)?;
    let rate = (f_end - f_start) / duration;
    sampled(n, dt, unit, |t| {
        let cycles = f_start * t + 0.5 * rate * t * t;
        amplitude * (2.0 * PI * cycles - 0.5 * PI).sin() + offset
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_quarter_period() {
        let s = gen_sine(0.5, 1.0, 0.0, 2.0, DEFAULT_DT, Unit::Deg).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert!((s.values[100] - 1.0).abs() < 1e-12);
        assert_eq!(s.len(), 400);
    }

    #[test]
    fn sine_range_bound() {
        let s = gen_sine(0.3, 4.0, -2.0, 10.0, DEFAULT_DT, Unit::Deg).unwrap();
        assert!(s.values.iter().all(|v| (-6.0..=2.0).contains(v)));
    }

    #[test]
    fn multisine_paper_start_values() {
        let f = [0.12, 0.04, 0.31, 0.29, 0.25];
        let complex = gen_multisine(&f, 6.5, 40.5, -PI / 2.0, 100.0, DEFAULT_DT, Unit::Deg).unwrap();
        assert!((complex.values[0] - 8.0).abs() < 1e-12);
        let pressure = gen_multisine(&f, 35.0, 175.0, -PI / 2.0, 80.0, DEFAULT_DT, Unit::KPa).unwrap();
        assert!(pressure.values[0].abs() < 1e-12);
        assert_eq!(pressure.len(), 16_000);
    }

    #[test]
    fn single_frequency_multisine_is_sine() {
        let a = gen_multisine(&[0.2], 3.0, 1.0, 0.0, 5.0, DEFAULT_DT, Unit::Deg).unwrap();
        let b = gen_sine(0.2, 3.0, 1.0, 5.0, DEFAULT_DT, Unit::Deg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadratic_chirp() {
        let s = gen_chirp_quadratic(27.5, 32.5, 0.01125, 0.1, -0.5 * PI, 80.0, DEFAULT_DT, Unit::Deg).unwrap();
        assert!((s.values[0] - 5.0).abs() < 1e-12);
        assert_eq!(s.len(), 16_000);

        // c2 = 0 is a sine at c1 / 2 Hz.
        let flat = gen_chirp_quadratic(2.0, 0.0, 0.0, 0.6, 0.0, 4.0, DEFAULT_DT, Unit::Deg).unwrap();
        let sine = gen_sine(0.3, 2.0, 0.0, 4.0, DEFAULT_DT, Unit::Deg).unwrap();
        for (a, b) in flat.values.iter().zip(&sine.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_starts_at_minimum() {
        let s = gen_sweep_frequency(0.1, 1.0, 175.0, 175.0, 120.0, DEFAULT_DT, Unit::KPa).unwrap();
        assert_eq!(s.len(), 24_000);
        // sin(-pi/2) = -1 closes the phase equation at t = 0.
        assert!((s.values[0] - 0.0).abs() < 1e-12);
        assert!(s.values.iter().all(|v| (-1e-9..=350.0 + 1e-9).contains(v)));
    }

    #[test]
    fn degenerate_sweep_is_plain_sine() {
        let s = gen_sweep_frequency(0.4, 0.4, 1.0, 0.0, 5.0, DEFAULT_DT, Unit::Deg).unwrap();
        let r = gen_multisine(&[0.4], 1.0, 0.0, -0.5 * PI, 5.0, DEFAULT_DT, Unit::Deg).unwrap();
        for (a, b) in s.values.iter().zip(&r.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(matches!(gen_sine(0.0, 1.0, 0.0, 1.0, DEFAULT_DT, Unit::Deg), Err(Error::InvalidSpec(_))));
        assert!(matches!(gen_sine(1.0, 1.0, 0.0, -1.0, DEFAULT_DT, Unit::Deg), Err(Error::InvalidSpec(_))));
        assert!(matches!(gen_sine(1.0, 1.0, 0.0, 1.0, 0.0, Unit::Deg), Err(Error::InvalidSpec(_))));
        assert!(matches!(gen_multisine(&[], 1.0, 0.0, 0.0, 1.0, DEFAULT_DT, Unit::Deg), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            gen_sweep_frequency(1.0, 0.5, 1.0, 0.0, 1.0, DEFAULT_DT, Unit::Deg),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn csv_has_unit_header() {
        let s = gen_sine(1.0, 1.0, 0.0, 0.01, DEFAULT_DT, Unit::KPa).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# unit: t=s, value=kPa"));
        assert_eq!(lines.next(), Some("t,value"));
        assert_eq!(lines.count(), 2);
    }
}
