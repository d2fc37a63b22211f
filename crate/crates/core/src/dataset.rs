//! Recorded hysteresis experiments: the bending actuator driven by a
//! pressure profile while its measured angle drives the reservoir.

use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fprc::convert_angle;
use crate::plant::{ActuatorParams, ReservoirParams};
use crate::signals::TimeSeries;

const HEADER: [&str; 5] = ["t", "theta", "p_exp", "p_i", "p_o"];
const UNITS_LINE: &str = "# units: t=s, theta=deg, p_exp=kPa, p_i=kPa, p_o=kPa";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub t: Vec<f64>,
    /// Measured bending angle [deg].
    pub theta: Vec<f64>,
    /// Pressure applied to the actuator [kPa].
    pub p_exp: Vec<f64>,
    /// Reservoir input pressure [kPa].
    pub p_i: Vec<f64>,
    /// Reservoir sealed-chamber pressure [kPa].
    pub p_o: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        for (name, col) in [("theta", &self.theta), ("p_exp", &self.p_exp), ("p_i", &self.p_i), ("p_o", &self.p_o)] {
            if col.len() != n {
                return Err(Error::InvalidData(format!("column {name} has {} rows, expected {n}", col.len())));
            }
        }
        if n == 0 {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidData(format!("sample period {} is not positive", self.dt)));
        }
        Ok(())
    }

    pub fn slice(&self, r: Range<usize>) -> Dataset {
        Dataset {
            dt: self.dt,
            t: self.t[r.clone()].to_vec(),
            theta: self.theta[r.clone()].to_vec(),
            p_exp: self.p_exp[r.clone()].to_vec(),
            p_i: self.p_i[r.clone()].to_vec(),
            p_o: self.p_o[r].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{UNITS_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for k in 0..self.len() {
            w.write_record(&[
                self.t[k].to_string(),
                self.theta[k].to_string(),
                self.p_exp[k].to_string(),
                self.p_i[k].to_string(),
                self.p_o[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse a dataset; `source` names the input in error messages.
    pub fn read_csv<R: Read>(input: R, source: &str) -> Result<Dataset> {
        let parse_err = |line: u64, message: String| Error::Parse { path: source.to_string(), line, message };
        let mut header_seen = false;
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (idx, line) in BufReader::new(input).lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if !header_seen {
                if fields != HEADER {
                    return Err(parse_err(line_no, format!("expected header {}, found '{trimmed}'", HEADER.join(","))));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != HEADER.len() {
                return Err(parse_err(line_no, format!("expected {} fields, found {}", HEADER.len(), fields.len())));
            }
            for (j, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| parse_err(line_no, format!("column {}: '{f}' is not a number", HEADER[j])))?;
                if !v.is_finite() {
                    return Err(parse_err(line_no, format!("column {}: non-finite value", HEADER[j])));
                }
                cols[j].push(v);
            }
        }
        if !header_seen {
            return Err(parse_err(1, "missing header".into()));
        }
        let [t, theta, p_exp, p_i, p_o] = cols;
        if t.len() < 2 {
            return Err(Error::InvalidData(format!("{source}: need at least two samples to infer the sample period")));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        let ds = Dataset { dt, t, theta, p_exp, p_i, p_o };
        ds.validate()?;
        Ok(ds)
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f, &path.display().to_string())
    }
}

/// Standard deviations of additive Gaussian sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    /// Angle sensor [deg].
    pub theta: f64,
    /// Reservoir pressure sensor [kPa].
    pub p_o: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { theta: 0.02, p_o: 0.2 }
    }
}

/// Run one hysteresis experiment. At each step the actuator receives
/// `p_exp(k)`, its measured angle `θ(k)` sets `P_i = K_in θ(k)`, and the
/// reservoir responds with `P_o(k)`.
pub fn simulate_experiment(
    p_exp: &TimeSeries,
    actuator: &ActuatorParams,
    reservoir: &ReservoirParams,
    k_in: f64,
    noise: SensorNoise,
    seed: u64,
) -> Result<Dataset> {
    if p_exp.is_empty() {
        return Err(Error::InvalidData("pressure profile is empty".into()));
    }
    let mut act = actuator.build()?;
    let mut res = reservoir.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_noise = Normal::new(0.0, noise.theta).map_err(|e| Error::InvalidSpec(format!("angle noise: {e}")))?;
    let p_noise = Normal::new(0.0, noise.p_o).map_err(|e| Error::InvalidSpec(format!("pressure noise: {e}")))?;
    let n = p_exp.len();
    let mut ds = Dataset {
        dt: p_exp.dt,
        t: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        p_exp: Vec::with_capacity(n),
        p_i: Vec::with_capacity(n),
        p_o: Vec::with_capacity(n),
    };
    for (k, &p) in p_exp.values.iter().enumerate() {
        let angle = act.step(p, p_exp.dt)?.value;
        let theta = angle + theta_noise.sample(&mut rng);
        let p_i = convert_angle(theta, k_in).p_i;
        let p_o = res.step(p_i, p_exp.dt)?.value + p_noise.sample(&mut rng);
        ds.t.push(p_exp.time(k));
        ds.theta.push(theta);
        ds.p_exp.push(p);
        ds.p_i.push(p_i);
        ds.p_o.push(p_o);
    }
    Ok(ds)
}
