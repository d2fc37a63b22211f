//! Open- and closed-loop bending-angle tracking on the simulated actuator.

use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::esn::EsnModel;
use crate::experiment::{ModelArtifact, ModelKind};
use crate::fprc::{FeatureSet, FprcModel};
use crate::plant::{apply_disturbance, ActuatorParams, DisturbanceMode, DisturbanceSpec, ReservoirPlant, PRESSURE_LIMIT};
use crate::signals::{SignalSpec, TimeSeries, Unit};
use crate::training::{mean_std, rmse};

/// Divergence threshold on the tracking error [deg].
const ERROR_ENVELOPE: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    /// kPa/deg
    pub kp: f64,
    /// kPa·s/deg
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    /// V/kPa
    pub kp: f64,
    /// V/(kPa·s)
    pub ki: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Feedback gains used together with a feedforward model.
    pub pd: PdGains,
    /// Gains of the feedback-only baseline.
    pub pd_only: PdGains,
    pub pi_main: PiGains,
    pub pi_fprc: PiGains,
    /// Treat both pressure loops as perfect.
    pub pi_ideal: bool,
    /// Chamber pressure rate per valve volt [kPa/(V·s)] in the dynamic
    /// pressure-loop model.
    pub valve_gain: f64,
    /// Valve command saturation [V].
    pub valve_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            pd: PdGains { kp: 0.5, kd: 0.005 },
            pd_only: PdGains { kp: 20.0, kd: 0.1 },
            pi_main: PiGains { kp: 0.03, ki: 0.1e-5 },
            pi_fprc: PiGains { kp: 0.05, ki: 0.1e-5 },
            pi_ideal: true,
            valve_gain: 2000.0,
            valve_limit: 5.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pd.kp,
            self.pd.kd,
            self.pd_only.kp,
            self.pd_only.kd,
            self.pi_main.kp,
            self.pi_main.ki,
            self.pi_fprc.kp,
            self.pi_fprc.ki,
        ];
        if all.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidSpec("controller gains must be finite and >= 0".into()));
        }
        if !(self.valve_gain > 0.0 && self.valve_limit > 0.0) {
            return Err(Error::InvalidSpec("valve gain and limit must be positive".into()));
        }
        Ok(())
    }
}

/// `P_fb = Kp e + Kd (e − e_prev) / dt`
pub fn pd_step(e: f64, prev_e: f64, gains: PdGains, dt: f64) -> f64 {
    gains.kp * e + gains.kd * (e - prev_e) / dt
}

/// PI valve command with conditional-integration anti-windup: the integral
/// is only advanced while the command stays inside `±limit`.
pub fn pi_pressure_step(target: f64, actual: f64, integral: &mut f64, gains: PiGains, dt: f64, limit: f64) -> f64 {
    let e = target - actual;
    let candidate = *integral + e * dt;
    let u = gains.kp * e + gains.ki * candidate;
    if u.abs() <= limit {
        *integral = candidate;
        u
    } else {
        (gains.kp * e + gains.ki * *integral).clamp(-limit, limit)
    }
}

/// Chamber pressure regulated by a valve and a PI controller, or passed
/// through unchanged when ideal.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureLoop {
    gains: PiGains,
    ideal: bool,
    valve_gain: f64,
    limit: f64,
    pressure: f64,
    integral: f64,
}

impl PressureLoop {
    pub fn new(gains: PiGains, ideal: bool, valve_gain: f64, limit: f64) -> Self {
        Self { gains, ideal, valve_gain, limit, pressure: 0.0, integral: 0.0 }
    }

    pub fn main(g: &ControllerGains) -> Self {
        Self::new(g.pi_main, g.pi_ideal, g.valve_gain, g.valve_limit)
    }

    pub fn fprc(g: &ControllerGains) -> Self {
        Self::new(g.pi_fprc, g.pi_ideal, g.valve_gain, g.valve_limit)
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    /// Track `target` for one step and return the applied pressure.
    pub fn apply(&mut self, target: f64, dt: f64) -> f64 {
        if self.ideal {
            self.pressure = target;
        } else {
            let v = pi_pressure_step(target, self.pressure, &mut self.integral, self.gains, dt, self.limit);
            self.pressure = (self.pressure + self.valve_gain * v * dt).clamp(0.0, PRESSURE_LIMIT);
        }
        self.pressure
    }

    pub fn reset(&mut self) {
        self.pressure = 0.0;
        self.integral = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeedforwardSample {
    pub p_ff: f64,
    pub p_i: f64,
    pub p_o: f64,
    pub p_o_filtered: f64,
}

/// A feedforward model evaluated on the reference angle.
pub trait Feedforward: Send {
    fn step(&mut self, theta_d: f64, dt: f64) -> Result<FeedforwardSample>;

    /// The physical reservoir in the loop, if any (disturbance target).
    fn reservoir_mut(&mut self) -> Option<&mut ReservoirPlant>;

    fn reset(&mut self);
}

/// FPRC (or fuzzy-linear) model with its own reservoir plant.
pub struct FprcFeedforward {
    model: FprcModel,
    reservoir: ReservoirPlant,
    pressure: PressureLoop,
}

impl FprcFeedforward {
    pub fn new(model: FprcModel, reservoir: ReservoirPlant, pressure: PressureLoop) -> Self {
        Self { model, reservoir, pressure }
    }
}

impl Feedforward for FprcFeedforward {
    fn step(&mut self, theta_d: f64, dt: f64) -> Result<FeedforwardSample> {
        if self.model.features() == FeatureSet::ThetaOnly {
            let p_ff = self.model.step_recorded(theta_d, 0.0)?;
            return Ok(FeedforwardSample { p_ff, ..Default::default() });
        }
        let k_in = self.model.params().k_in;
        let p_i = crate::fprc::convert_angle(theta_d, k_in).p_i;
        let applied = self.pressure.apply(p_i, dt);
        let out = self.reservoir.step(applied, dt)?;
        let p = self.model.step_recorded(theta_d, out.value)?;
        let p_o_filtered = self.model.state().filter.value().unwrap_or(out.value);
        Ok(FeedforwardSample { p_ff: p, p_i: applied, p_o: out.value, p_o_filtered })
    }

    fn reservoir_mut(&mut self) -> Option<&mut ReservoirPlant> {
        (self.model.features() == FeatureSet::Reservoir).then_some(&mut self.reservoir)
    }

    fn reset(&mut self) {
        self.model.reset();
        self.reservoir.reset();
        self.pressure.reset();
    }
}

pub struct EsnFeedforward {
    model: EsnModel,
}

impl EsnFeedforward {
    pub fn new(model: EsnModel) -> Self {
        Self { model }
    }
}

impl Feedforward for EsnFeedforward {
    fn step(&mut self, theta_d: f64, _dt: f64) -> Result<FeedforwardSample> {
        Ok(FeedforwardSample { p_ff: self.model.step(theta_d)?, ..Default::default() })
    }

    fn reservoir_mut(&mut self) -> Option<&mut ReservoirPlant> {
        None
    }

    fn reset(&mut self) {
        self.model.reset();
    }
}

/// Build a fresh feedforward controller from a trained artifact.
pub fn feedforward_from(artifact: &ModelArtifact, gains: &ControllerGains) -> Result<Box<dyn Feedforward>> {
    Ok(match artifact {
        ModelArtifact::Esn(a) => Box::new(EsnFeedforward::new(EsnModel::from_parts(a.params.clone(), a.w_out.clone())?)),
        ModelArtifact::Fprc(a) => Box::new(FprcFeedforward::new(
            a.model(FeatureSet::Reservoir)?,
            a.reservoir.build()?,
            PressureLoop::fprc(gains),
        )),
        ModelArtifact::FuzzyLinear(a) => Box::new(FprcFeedforward::new(
            a.model(FeatureSet::ThetaOnly)?,
            a.reservoir.build()?,
            PressureLoop::fprc(gains),
        )),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub theta_d: f64,
    pub theta: f64,
    pub e_theta: f64,
    pub p_ff: f64,
    pub p_fb: f64,
    pub p_d: f64,
    pub p_i: f64,
    pub p_o: f64,
    pub p_o_filtered: f64,
    pub disturbance: bool,
}

const LOG_HEADER: [&str; 11] =
    ["t", "theta_d", "theta", "e_theta", "p_ff", "p_fb", "p_d", "p_i", "p_o", "p_o_filtered", "disturbance"];
const LOG_UNITS: &str = "# units: t=s, theta_d=deg, theta=deg, e_theta=deg, p_ff=kPa, p_fb=kPa, p_d=kPa, p_i=kPa, p_o=kPa, p_o_filtered=kPa, disturbance=0/1";

/// Per-step record of one tracking run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub dt: f64,
    pub rows: Vec<LogRow>,
    /// Steps at which `P_d` left `[0, 450]` kPa and was clamped.
    pub saturated_steps: usize,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, f: impl Fn(&LogRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    fn after(&self, t0: f64) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.t >= t0)
    }

    /// Tracking RMSE from `settle` seconds on.
    pub fn tracking_rmse(&self, settle: f64) -> Result<f64> {
        self.window_rmse(settle, f64::INFINITY)
    }

    /// Tracking RMSE over `t ∈ [from, to)`.
    pub fn window_rmse(&self, from: f64, to: f64) -> Result<f64> {
        let (d, a): (Vec<f64>, Vec<f64>) =
            self.rows.iter().filter(|r| r.t >= from && r.t < to).map(|r| (r.theta_d, r.theta)).unzip();
        rmse(&d, &a)
    }

    /// RMS of a column from `settle` seconds on.
    pub fn rms(&self, settle: f64, f: impl Fn(&LogRow) -> f64) -> f64 {
        let v: Vec<f64> = self.after(settle).map(f).collect();
        if v.is_empty() {
            return 0.0;
        }
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{LOG_UNITS}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_HEADER)?;
        for r in &self.rows {
            w.write_record(&[
                r.t.to_string(),
                r.theta_d.to_string(),
                r.theta.to_string(),
                r.e_theta.to_string(),
                r.p_ff.to_string(),
                r.p_fb.to_string(),
                r.p_d.to_string(),
                r.p_i.to_string(),
                r.p_o.to_string(),
                r.p_o_filtered.to_string(),
                u8::from(r.disturbance).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, source: &str) -> Result<RunLog> {
        let err = |line: u64, message: String| Error::Parse { path: source.to_string(), line, message };
        let mut rows = Vec::new();
        let mut header = false;
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let n = i as u64 + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if !header {
                if f != LOG_HEADER {
                    return Err(err(n, "unexpected run-log header".into()));
                }
                header = true;
                continue;
            }
            if f.len() != LOG_HEADER.len() {
                return Err(err(n, format!("expected {} fields, found {}", LOG_HEADER.len(), f.len())));
            }
            let mut v = [0.0; 10];
            for j in 0..10 {
                v[j] = f[j].parse().map_err(|_| err(n, format!("column {}: '{}' is not a number", LOG_HEADER[j], f[j])))?;
            }
            let disturbance = match f[10] {
                "0" => false,
                "1" => true,
                other => return Err(err(n, format!("disturbance flag '{other}' must be 0 or 1"))),
            };
            rows.push(LogRow {
                t: v[0],
                theta_d: v[1],
                theta: v[2],
                e_theta: v[3],
                p_ff: v[4],
                p_fb: v[5],
                p_d: v[6],
                p_i: v[7],
                p_o: v[8],
                p_o_filtered: v[9],
                disturbance,
            });
        }
        let dt = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
        Ok(RunLog { dt, rows, saturated_steps: 0 })
    }
}

/// Closed-loop tracking. Each step reads the angle, computes the PD
/// correction on `e = θ_d − θ`, adds the feedforward command (none gives the
/// PD-only loop), clamps `P_d` to the admissible range and drives the
/// actuator through the main pressure loop.
pub fn run_closed_loop(
    reference: &TimeSeries,
    mut feedforward: Option<&mut dyn Feedforward>,
    plant: &ActuatorParams,
    pd: PdGains,
    gains: &ControllerGains,
    disturbance: Option<&DisturbanceSpec>,
) -> Result<RunLog> {
    if reference.is_empty() {
        return Err(Error::InvalidData("reference signal is empty".into()));
    }
    if let Some(d) = disturbance {
        d.validate()?;
    }
    let dt = reference.dt;
    let mut actuator = plant.build()?;
    let mut pressure = PressureLoop::main(gains);
    let mut rng = disturbance.map(DisturbanceSpec::rng);
    let mut prev_e = 0.0;
    let mut log = RunLog { dt, rows: Vec::with_capacity(reference.len()), saturated_steps: 0 };
    if let Some(ff) = feedforward.as_deref_mut() {
        ff.reset();
    }

    for (k, &theta_d) in reference.values.iter().enumerate() {
        let at = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("step {k}: {m}")),
            other => other,
        };
        let t = reference.time(k);
        let theta = actuator.angle();
        let e = theta_d - theta;
        if e.abs() >= ERROR_ENVELOPE {
            return Err(Error::Numeric(format!("step {k}: tracking error {e:.3} deg left the ±{ERROR_ENVELOPE} envelope")));
        }
        let p_fb = pd_step(e, prev_e, pd, dt);
        prev_e = e;

        let mut disturbed = false;
        let sample = match feedforward.as_deref_mut() {
            Some(ff) => {
                if let (Some(spec), Some(rng)) = (disturbance, rng.as_mut()) {
                    if let Some(res) = ff.reservoir_mut() {
                        disturbed = apply_disturbance(res, spec, t, rng);
                    }
                }
                ff.step(theta_d, dt).map_err(at)?
            }
            None => FeedforwardSample::default(),
        };
        let p_d = sample.p_ff + p_fb;
        ensure_finite(p_d, "desired pressure").map_err(at)?;
        let clamped = p_d.clamp(0.0, PRESSURE_LIMIT);
        if clamped != p_d {
            log.saturated_steps += 1;
        }
        let applied = pressure.apply(clamped, dt);
        actuator.step(applied, dt).map_err(at)?;
        log.rows.push(LogRow {
            t,
            theta_d,
            theta,
            e_theta: e,
            p_ff: sample.p_ff,
            p_fb,
            p_d,
            p_i: sample.p_i,
            p_o: sample.p_o,
            p_o_filtered: sample.p_o_filtered,
            disturbance: disturbed,
        });
    }
    if log.saturated_steps > 0 {
        log::debug!("desired pressure clamped on {} of {} steps", log.saturated_steps, log.len());
    }
    Ok(log)
}

/// Feedforward-only tracking: `P_fb ≡ 0`.
pub fn run_open_loop(
    reference: &TimeSeries,
    feedforward: &mut dyn Feedforward,
    plant: &ActuatorParams,
    gains: &ControllerGains,
    disturbance: Option<&DisturbanceSpec>,
) -> Result<RunLog> {
    run_closed_loop(reference, Some(feedforward), plant, PdGains { kp: 0.0, kd: 0.0 }, gains, disturbance)
}

/// Signed polygon area `½ Σ (x_i y_{i+1} − x_{i+1} y_i)`.
pub fn shoelace_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let s: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    0.5 * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisLoop {
    /// Steady-state cycles of `(x, y)` samples.
    pub cycles: Vec<Vec<(f64, f64)>>,
    /// Mean enclosed area magnitude over the cycles.
    pub area: f64,
}

/// Split `(x, y)` into cycles at upward crossings of the midpoint of `x`'s
/// range and measure each cycle's enclosed area. The first cycle is treated
/// as transient and dropped when more than one is available.
pub fn extract_hysteresis_loop(x: &[f64], y: &[f64]) -> Result<HysteresisLoop> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::InvalidData("empty series has no hysteresis loop".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let crossings: Vec<usize> = (1..x.len()).filter(|&k| x[k - 1] < mid && x[k] >= mid).collect();
    if crossings.len() < 2 {
        return Err(Error::InvalidData("fewer than one full cycle in the series".into()));
    }
    let mut cycles: Vec<Vec<(f64, f64)>> =
        crossings.windows(2).map(|w| (w[0]..w[1]).map(|k| (x[k], y[k])).collect()).collect();
    if cycles.len() > 1 {
        cycles.remove(0);
    }
    let area = cycles.iter().map(|c| shoelace_area(c).abs()).sum::<f64>() / cycles.len() as f64;
    Ok(HysteresisLoop { cycles, area })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    /// Feedforward model alone.
    Feedforward,
    /// Feedforward model plus PD feedback.
    FeedforwardPd,
    /// PD feedback alone.
    Pd,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 3] = [ControllerMode::Feedforward, ControllerMode::FeedforwardPd, ControllerMode::Pd];

    pub fn label(self, model: ModelKind) -> String {
        match self {
            ControllerMode::Feedforward => model.label().to_string(),
            ControllerMode::FeedforwardPd => format!("{}+PD", model.label()),
            ControllerMode::Pd => "PD".to_string(),
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ControllerMode::Feedforward => "ff",
            ControllerMode::FeedforwardPd => "ff-pd",
            ControllerMode::Pd => "pd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub reference: SignalSpec,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSpec>,
}

/// Sine tracking at 0.2 and 0.5 Hz, the quadratic chirp, the five-tone
/// signal and a 0.3 Hz sine with reservoir disturbances.
pub fn default_scenarios() -> Vec<Scenario> {
    let phase = -std::f64::consts::FRAC_PI_2;
    let sine = |name: &str, freq: f64, duration: f64| Scenario {
        name: name.into(),
        reference: SignalSpec::Sine { freq, amplitude: 27.5, offset: 32.5, phase, duration },
        disturbance: None,
    };
    vec![
        sine("sine-0.2", 0.2, 30.0),
        sine("sine-0.5", 0.5, 20.0),
        Scenario {
            name: "chirp".into(),
            reference: SignalSpec::ChirpQuadratic { amplitude: 27.5, offset: 32.5, c2: 0.01125, c1: 0.1, phase, duration: 80.0 },
            disturbance: None,
        },
        Scenario {
            name: "complex".into(),
            reference: SignalSpec::Multisine {
                frequencies: vec![0.12, 0.04, 0.31, 0.29, 0.25],
                amplitude: 6.5,
                offset: 40.5,
                phase,
                duration: 100.0,
            },
            disturbance: None,
        },
        Scenario {
            name: "disturbance".into(),
            reference: SignalSpec::Sine { freq: 0.3, amplitude: 27.5, offset: 32.5, phase, duration: 40.0 },
            disturbance: Some(DisturbanceSpec {
                window: [12.0, 40.0],
                mode: DisturbanceMode::AdditivePressure,
                magnitude: 5.0,
                seed: 0,
            }),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub dt: f64,
    /// Initial transient excluded from the tracking metrics [s].
    pub settle: f64,
    pub plant: ActuatorParams,
    pub gains: ControllerGains,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { dt: crate::signals::DEFAULT_DT, settle: 2.0, plant: ActuatorParams::default(), gains: ControllerGains::default() }
    }
}

pub fn run_scenario(
    scenario: &Scenario,
    mode: ControllerMode,
    artifact: &ModelArtifact,
    settings: &SimulationSettings,
) -> Result<RunLog> {
    settings.gains.validate()?;
    let reference = scenario.reference.generate(settings.dt, Unit::Deg)?;
    let d = scenario.disturbance.as_ref();
    let g = &settings.gains;
    match mode {
        ControllerMode::Pd => run_closed_loop(&reference, None, &settings.plant, g.pd_only, g, None),
        ControllerMode::Feedforward => {
            let mut ff = feedforward_from(artifact, g)?;
            run_open_loop(&reference, ff.as_mut(), &settings.plant, g, d)
        }
        ControllerMode::FeedforwardPd => {
            let mut ff = feedforward_from(artifact, g)?;
            run_closed_loop(&reference, Some(ff.as_mut()), &settings.plant, g.pd, g, d)
        }
    }
}

/// Outcome of one scenario × controller simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub scenario: String,
    pub mode: ControllerMode,
    pub result: std::result::Result<RunLog, String>,
}

/// Run every scenario under every mode; failures are kept per run.
pub fn run_suite(
    scenarios: &[Scenario],
    modes: &[ControllerMode],
    artifact: &ModelArtifact,
    settings: &SimulationSettings,
) -> Vec<ScenarioRun> {
    let jobs: Vec<(&Scenario, ControllerMode)> = scenarios.iter().flat_map(|s| modes.iter().map(move |m| (s, *m))).collect();
    jobs.par_iter()
        .map(|(s, m)| {
            let result = run_scenario(s, *m, artifact, settings).map_err(|e| {
                log::warn!("scenario {} ({:?}) aborted: {e}", s.name, m);
                e.to_string()
            });
            ScenarioRun { scenario: s.name.clone(), mode: *m, result }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub controller: String,
    /// RMSE per scenario [deg]; `None` for aborted or missing runs.
    pub rmse: Vec<Option<f64>>,
}

/// Tracking RMSE table: rows are controllers, columns scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub scenarios: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl TrackingReport {
    pub fn get(&self, controller: &str, scenario: &str) -> Option<f64> {
        let j = self.scenarios.iter().position(|s| s == scenario)?;
        self.rows.iter().find(|r| r.controller == controller)?.rmse[j]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> =
            std::iter::once("controller".to_string()).chain(self.scenarios.iter().map(|s| format!("{s} [deg]"))).collect();
        w.write_record(header)?;
        for r in &self.rows {
            let rec: Vec<String> = std::iter::once(r.controller.clone())
                .chain(r.rmse.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))
                .collect();
            w.write_record(rec)?;
        }
        crate::training::finish_csv(w)
    }
}

/// Tabulate tracking RMSE (after `settle` seconds) with a fixed row order.
pub fn tracking_report(
    logs: &[(String, ControllerMode, &RunLog)],
    scenarios: &[String],
    model: ModelKind,
    settle: f64,
) -> TrackingReport {
    let rows = ControllerMode::ALL
        .iter()
        .filter(|m| logs.iter().any(|(_, lm, _)| lm == *m))
        .map(|m| ReportRow {
            controller: m.label(model),
            rmse: scenarios
                .iter()
                .map(|s| {
                    logs.iter().find(|(ls, lm, _)| ls == s && lm == m).and_then(|(_, _, l)| l.tracking_rmse(settle).ok())
                })
                .collect(),
        })
        .collect();
    TrackingReport { scenarios: scenarios.to_vec(), rows }
}

/// Per-run loop area and feedforward/feedback balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub controller: String,
    pub rmse: f64,
    /// Reference-to-actual loop area [deg²], when the reference is periodic.
    pub loop_area: Option<f64>,
    pub rms_p_ff: f64,
    pub rms_p_fb: f64,
    pub saturated_steps: usize,
}

pub fn summarize_run(scenario: &str, controller: &str, log: &RunLog, settle: f64) -> Result<RunSummary> {
    let steady: Vec<&LogRow> = log.after(settle).collect();
    let x: Vec<f64> = steady.iter().map(|r| r.theta_d).collect();
    let y: Vec<f64> = steady.iter().map(|r| r.theta).collect();
    Ok(RunSummary {
        scenario: scenario.to_string(),
        controller: controller.to_string(),
        rmse: log.tracking_rmse(settle)?,
        loop_area: extract_hysteresis_loop(&x, &y).ok().map(|l| l.area),
        rms_p_ff: log.rms(settle, |r| r.p_ff),
        rms_p_fb: log.rms(settle, |r| r.p_fb),
        saturated_steps: log.saturated_steps,
    })
}

/// Tracking error inside the disturbance window against the clean prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    pub controller: String,
    pub clean_rmse: f64,
    pub disturbed_rmse: f64,
    /// `disturbed / clean − 1`
    pub relative_increase: f64,
    /// Mean and standard deviation of `P_o` inside the window [kPa].
    pub p_o_mean_sd: (f64, f64),
}

pub fn disturbance_report(controller: &str, log: &RunLog, spec: &DisturbanceSpec, settle: f64) -> Result<DisturbanceReport> {
    let clean_rmse = log.window_rmse(settle, spec.window[0])?;
    let disturbed_rmse = log.window_rmse(spec.window[0], spec.window[1])?;
    let p_o: Vec<f64> = log.rows.iter().filter(|r| spec.contains(r.t)).map(|r| r.p_o).collect();
    Ok(DisturbanceReport {
        controller: controller.to_string(),
        clean_rmse,
        disturbed_rmse,
        relative_increase: disturbed_rmse / clean_rmse - 1.0,
        p_o_mean_sd: mean_std(&p_o),
    })
}
