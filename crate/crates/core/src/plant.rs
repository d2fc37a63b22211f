//! Simulated plants: the controlled bending actuator (pressure to angle) and
//! the dual-chamber pneumatic reservoir (input pressure to sealed-chamber
//! pressure). Both are a Prandtl-Ishlinskii play-operator stack followed by a
//! first-order lag.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Upper actuation limit of both pneumatic chambers [kPa].
pub const PRESSURE_LIMIT: f64 = 450.0;

/// Weighted stack of play (backlash) operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayOperatorStack {
    radii: Vec<f64>,
    weights: Vec<f64>,
    states: Vec<f64>,
    last_input: f64,
}

impl PlayOperatorStack {
    pub fn new(radii: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidSpec("play stack needs at least one operator".into()));
        }
        if radii.len() != weights.len() {
            return Err(Error::Dimension { expected: radii.len(), got: weights.len() });
        }
        if !(radii[0] >= 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpec("play radii must be >= 0 and strictly increasing".into()));
        }
        if radii.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("play radii and weights must be finite".into()));
        }
        let states = vec![0.0; radii.len()];
        Ok(Self { radii, weights, states, last_input: 0.0 })
    }

    /// `n` operators with radii `0, Δ, 2Δ, ...` (`Δ = max_radius / n`) and
    /// geometrically decaying weights, scaled so the virgin loading curve maps
    /// `full_scale_input` to `full_scale_output`.
    pub fn uniform(n: usize, max_radius: f64, weight_decay: f64, full_scale_input: f64, full_scale_output: f64) -> Result<Self> {
        if n == 0 || !(max_radius > 0.0) || !(weight_decay > 0.0) || !(full_scale_input > max_radius) {
            return Err(Error::InvalidSpec(format!(
                "bad play stack shape: n={n}, max_radius={max_radius}, decay={weight_decay}, full scale={full_scale_input}"
            )));
        }
        let step = max_radius / n as f64;
        let radii: Vec<f64> = (0..n).map(|j| j as f64 * step).collect();
        let raw: Vec<f64> = (0..n).map(|j| weight_decay.powi(j as i32)).collect();
        let virgin: f64 = raw.iter().zip(&radii).map(|(w, r)| w * (full_scale_input - r)).sum();
        let scale = full_scale_output / virgin;
        Self::new(radii, raw.into_iter().map(|w| w * scale).collect())
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn output(&self) -> f64 {
        self.weights.iter().zip(&self.states).map(|(w, s)| w * s).sum()
    }

    pub fn step(&mut self, u: f64) -> Result<f64> {
        ensure_finite(u, "play operator input")?;
        for (s, r) in self.states.iter_mut().zip(&self.radii) {
            *s = (u - r).max((u + r).min(*s));
        }
        self.last_input = u;
        Ok(self.output())
    }

    /// Sum of `|w_j| (u_max + r_j)`: no reachable output exceeds this for
    /// inputs in `[-u_max, u_max]`.
    pub fn output_bound(&self, u_max: f64) -> f64 {
        self.weights.iter().zip(&self.radii).map(|(w, r)| w.abs() * (u_max + r)).sum()
    }

    pub fn reset(&mut self) {
        self.states.iter_mut().for_each(|s| *s = 0.0);
        self.last_input = 0.0;
    }

    /// Perturb operator states, keeping each within `radius` of the last input.
    fn kick(&mut self, rng: &mut impl Rng, magnitude: f64) {
        let u = self.last_input;
        for (s, r) in self.states.iter_mut().zip(&self.radii) {
            let delta = rng.random_range(-magnitude..=magnitude);
            *s = (*s + delta).clamp(u - r, u + r);
        }
    }
}

/// Shape parameters for a play stack built by [`PlayOperatorStack::uniform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackShape {
    pub operators: usize,
    pub max_radius: f64,
    pub weight_decay: f64,
    pub full_scale_input: f64,
    pub full_scale_output: f64,
}

impl StackShape {
    pub fn build(&self) -> Result<PlayOperatorStack> {
        PlayOperatorStack::uniform(
            self.operators,
            self.max_radius,
            self.weight_decay,
            self.full_scale_input,
            self.full_scale_output,
        )
    }
}

fn lag_factor(dt: f64, tau: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidSpec(format!("dt must be positive, got {dt}")));
    }
    Ok((dt / tau).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub value: f64,
    /// The input was outside the admissible range and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorParams {
    pub hysteresis: StackShape,
    pub lag_time_constant: f64,
    pub output_bounds: [f64; 2],
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            hysteresis: StackShape {
                operators: 8,
                max_radius: 100.0,
                weight_decay: 0.8,
                full_scale_input: PRESSURE_LIMIT,
                full_scale_output: 60.0,
            },
            lag_time_constant: 0.03,
            output_bounds: [0.0, 70.0],
        }
    }
}

impl ActuatorParams {
    pub fn build(&self) -> Result<ActuatorPlant> {
        ActuatorPlant::new(self.hysteresis.build()?, self.lag_time_constant, self.output_bounds)
    }
}

/// Bending actuator: pressure [kPa] to bending angle [deg].
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorPlant {
    hysteresis: PlayOperatorStack,
    lag_time_constant: f64,
    angle: f64,
    bounds: [f64; 2],
}

impl ActuatorPlant {
    pub fn new(hysteresis: PlayOperatorStack, lag_time_constant: f64, bounds: [f64; 2]) -> Result<Self> {
        if !(lag_time_constant > 0.0 && lag_time_constant.is_finite()) {
            return Err(Error::InvalidSpec(format!("lag time constant must be positive, got {lag_time_constant}")));
        }
        if !(bounds[0] < bounds[1]) || !(bounds[0] <= 0.0 && 0.0 <= bounds[1]) {
            return Err(Error::InvalidSpec(format!("angle bounds must bracket the rest angle, got {bounds:?}")));
        }
        Ok(Self { hysteresis, lag_time_constant, angle: 0.0, bounds })
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn hysteresis(&self) -> &PlayOperatorStack {
        &self.hysteresis
    }

    /// Apply pressure `p_d` for one step. Negative pressure vents to 0.
    pub fn step(&mut self, p_d: f64, dt: f64) -> Result<StepOutput> {
        ensure_finite(p_d, "actuator pressure")?;
        let a = lag_factor(dt, self.lag_time_constant)?;
        let clamped = p_d < 0.0;
        let target = self.hysteresis.step(p_d.max(0.0))?;
        self.angle = (self.angle + a * (target - self.angle)).clamp(self.bounds[0], self.bounds[1]);
        Ok(StepOutput { value: self.angle, clamped })
    }

    pub fn reset(&mut self) {
        self.hysteresis.reset();
        self.angle = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirParams {
    pub hysteresis: StackShape,
    pub lag_time_constant: f64,
    pub baseline_pressure: f64,
    pub input_limit: f64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            hysteresis: StackShape {
                operators: 8,
                max_radius: 160.0,
                weight_decay: 0.85,
                full_scale_input: PRESSURE_LIMIT,
                full_scale_output: 250.0,
            },
            lag_time_constant: 0.05,
            baseline_pressure: 100.0,
            input_limit: PRESSURE_LIMIT,
        }
    }
}

impl ReservoirParams {
    pub fn build(&self) -> Result<ReservoirPlant> {
        ReservoirPlant::new(
            self.hysteresis.build()?,
            self.lag_time_constant,
            self.baseline_pressure,
            self.input_limit,
        )
    }
}

/// Pneumatic reservoir: active-chamber pressure `P_i` to sealed-chamber
/// pressure `P_o`, both in kPa.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirPlant {
    hysteresis: PlayOperatorStack,
    lag_time_constant: f64,
    pressure: f64,
    baseline: f64,
    input_limit: f64,
}

impl ReservoirPlant {
    pub fn new(hysteresis: PlayOperatorStack, lag_time_constant: f64, baseline: f64, input_limit: f64) -> Result<Self> {
        if !(lag_time_constant > 0.0 && lag_time_constant.is_finite()) {
            return Err(Error::InvalidSpec(format!("lag time constant must be positive, got {lag_time_constant}")));
        }
        if !(baseline >= 0.0 && baseline.is_finite()) || !(input_limit > 0.0 && input_limit.is_finite()) {
            return Err(Error::InvalidSpec("baseline must be >= 0 and input limit > 0".into()));
        }
        Ok(Self { hysteresis, lag_time_constant, pressure: baseline, baseline, input_limit })
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn set_pressure(&mut self, p: f64) {
        self.pressure = p.max(0.0);
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn input_limit(&self) -> f64 {
        self.input_limit
    }

    pub fn hysteresis(&self) -> &PlayOperatorStack {
        &self.hysteresis
    }

    /// Upper bound on `P_o` for any admissible input history.
    pub fn output_bound(&self) -> f64 {
        self.hysteresis.output_bound(self.input_limit) + self.baseline
    }

    pub fn step(&mut self, p_i: f64, dt: f64) -> Result<StepOutput> {
        ensure_finite(p_i, "reservoir input pressure")?;
        let a = lag_factor(dt, self.lag_time_constant)?;
        let applied = p_i.clamp(0.0, self.input_limit);
        let target = self.baseline + self.hysteresis.step(applied)?;
        self.pressure = (self.pressure + a * (target - self.pressure)).max(0.0);
        Ok(StepOutput { value: self.pressure, clamped: applied != p_i })
    }

    pub fn reset(&mut self) {
        self.hysteresis.reset();
        self.pressure = self.baseline;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceMode {
    /// Add a random amount to the sealed-chamber pressure.
    AdditivePressure,
    /// Randomly displace the reservoir's play-operator states.
    StateKick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub window: [f64; 2],
    pub mode: DisturbanceMode,
    pub magnitude: f64,
    pub seed: u64,
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window[0] < self.window[1]) {
            return Err(Error::InvalidSpec(format!("disturbance window {:?} is empty", self.window)));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::InvalidSpec(format!("disturbance magnitude {} invalid", self.magnitude)));
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.window[0] && t < self.window[1]
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Perturb the reservoir if `t` falls inside the disturbance window.
/// Returns whether the window was active.
pub fn apply_disturbance(res: &mut ReservoirPlant, spec: &DisturbanceSpec, t: f64, rng: &mut impl Rng) -> bool {
    if !spec.contains(t) {
        return false;
    }
    if spec.magnitude == 0.0 {
        return true;
    }
    match spec.mode {
        DisturbanceMode::AdditivePressure => {
            let delta = rng.random_range(-spec.magnitude..=spec.magnitude);
            res.set_pressure(res.pressure + delta);
        }
        DisturbanceMode::StateKick => res.hysteresis.kick(rng, spec.magnitude),
    }
    true
}
