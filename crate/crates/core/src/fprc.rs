//! Fuzzy physical-reservoir feedforward model.
//!
//! The desired angle is converted to an actuation pressure for the reservoir,
//! the reservoir's sealed-chamber pressure is low-pass filtered, and tapped
//! histories of the angle and the filtered pressure form the state fed to the
//! fuzzy readout.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fuzzy::{FcmResult, FuzzyParams, FuzzyRuleSet};
use crate::plant::{ReservoirPlant, PRESSURE_LIMIT};
use crate::training::min_max;

/// Fixed-capacity history, newest first, zero-padded until full.
#[derive(Debug, Clone, PartialEq)]
pub struct TapBuffer {
    capacity: usize,
    ring: VecDeque<f64>,
}

impl TapBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, ring: VecDeque::with_capacity(capacity + 1) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Samples pushed so far, saturating at the capacity.
    pub fn filled(&self) -> usize {
        self.ring.len()
    }

    pub fn push(&mut self, v: f64) {
        self.ring.push_front(v);
        self.ring.truncate(self.capacity);
    }

    pub fn clear(&mut self) {
        self.ring.clear();
    }

    /// `[v(k), v(k−1), …, v(k−n+1)]`
    pub fn values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.capacity];
        self.write_into(&mut out);
        out
    }

    pub fn write_into(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (o, v) in out.iter_mut().zip(&self.ring) {
            *o = *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterInit {
    /// The filter starts at the first pressure sample.
    #[default]
    FirstSample,
    Zero,
}

/// Which state the fuzzy readout sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Angle taps followed by filtered reservoir-pressure taps.
    Reservoir,
    /// Angle taps only (the fuzzy-linear comparison model).
    ThetaOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FprcParams {
    /// Angle to pressure conversion factor [kPa/deg].
    pub k_in: f64,
    /// Low-pass filter factor in (0, 1].
    pub epsilon: f64,
    /// Reservoir output tap size.
    pub n_u: usize,
    /// Reference tap size.
    pub n_y: usize,
    #[serde(default)]
    pub filter_init: FilterInit,
    pub fuzzy: FuzzyParams,
}

impl Default for FprcParams {
    fn default() -> Self {
        Self { k_in: 7.0, epsilon: 0.01, n_u: 3, n_y: 5, filter_init: FilterInit::FirstSample, fuzzy: FuzzyParams::default() }
    }
}

impl FprcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_in > 0.0) {
            return Err(Error::InvalidSpec(format!("K_in must be positive, got {}", self.k_in)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidSpec(format!("filter factor must lie in (0, 1], got {}", self.epsilon)));
        }
        if self.n_u == 0 || self.n_y == 0 {
            return Err(Error::InvalidSpec("tap sizes must be >= 1".into()));
        }
        self.fuzzy.validate()
    }

    pub fn feature_dim(&self, set: FeatureSet) -> usize {
        match set {
            FeatureSet::Reservoir => self.n_y + self.n_u,
            FeatureSet::ThetaOnly => self.n_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Converted {
    pub p_i: f64,
    pub clamped: bool,
}

/// `P_i = K_in θ_d`, clamped to the reservoir's admissible pressure range.
pub fn convert_angle(theta_d: f64, k_in: f64) -> Converted {
    let raw = k_in * theta_d;
    let p_i = raw.clamp(0.0, PRESSURE_LIMIT);
    Converted { p_i, clamped: p_i != raw }
}

/// `P̃(k) = ε P(k) + (1 − ε) P̃(k − 1)`
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    epsilon: f64,
    init: FilterInit,
    value: Option<f64>,
}

impl LowPass {
    pub fn new(epsilon: f64, init: FilterInit) -> Self {
        Self { epsilon, init, value: None }
    }

    /// Start from an explicit previous output.
    pub fn with_previous(epsilon: f64, previous: f64) -> Self {
        Self { epsilon, init: FilterInit::Zero, value: Some(previous) }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn step(&mut self, p: f64) -> f64 {
        let prev = self.value.unwrap_or(match self.init {
            FilterInit::FirstSample => p,
            FilterInit::Zero => 0.0,
        });
        let next = self.epsilon * p + (1.0 - self.epsilon) * prev;
        self.value = Some(next);
        next
    }

    pub fn reset(&mut self) {
        self.value = None;
    }
}

/// Filter state and tap buffers of a running model.
#[derive(Debug, Clone, PartialEq)]
pub struct FprcState {
    pub filter: LowPass,
    pub p_taps: TapBuffer,
    pub theta_taps: TapBuffer,
}

impl FprcState {
    pub fn new(params: &FprcParams) -> Self {
        Self {
            filter: LowPass::new(params.epsilon, params.filter_init),
            p_taps: TapBuffer::new(params.n_u),
            theta_taps: TapBuffer::new(params.n_y),
        }
    }

    /// Push one `(θ, P_o)` sample; returns the filtered pressure.
    pub fn push(&mut self, theta: f64, p_o: f64) -> f64 {
        let filtered = self.filter.step(p_o);
        self.theta_taps.push(theta);
        self.p_taps.push(filtered);
        filtered
    }

    /// `x† = [θ taps, P̃_o taps]` (or θ taps alone).
    pub fn feature(&self, set: FeatureSet) -> Vec<f64> {
        let mut x = self.theta_taps.values();
        if set == FeatureSet::Reservoir {
            x.extend(self.p_taps.values());
        }
        x
    }

    pub fn reset(&mut self) {
        self.filter.reset();
        self.p_taps.clear();
        self.theta_taps.clear();
    }
}

/// Apply the low-pass filter to a whole recorded pressure series.
pub fn filter_series(p_o: &[f64], epsilon: f64, init: FilterInit) -> Vec<f64> {
    let mut f = LowPass::new(epsilon, init);
    p_o.iter().map(|p| f.step(*p)).collect()
}

/// Tap features (N × dim) from an angle series and an already filtered
/// reservoir series.
pub fn tap_features(theta: &[f64], p_filtered: &[f64], n_y: usize, n_u: usize, set: FeatureSet) -> Result<DMatrix<f64>> {
    if theta.len() != p_filtered.len() {
        return Err(Error::InvalidData(format!(
            "angle series has {} samples, reservoir series {}",
            theta.len(),
            p_filtered.len()
        )));
    }
    let dim = match set {
        FeatureSet::Reservoir => n_y + n_u,
        FeatureSet::ThetaOnly => n_y,
    };
    let n = theta.len();
    Ok(DMatrix::from_fn(n, dim, |k, j| {
        if j < n_y {
            if k >= j { theta[k - j] } else { 0.0 }
        } else {
            let lag = j - n_y;
            if k >= lag { p_filtered[k - lag] } else { 0.0 }
        }
    }))
}

/// Features and targets over a recorded experiment (`θ` used as `θ_d`).
pub fn collect_training(
    theta: &[f64],
    p_exp: &[f64],
    p_o: &[f64],
    params: &FprcParams,
    set: FeatureSet,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if theta.len() != p_exp.len() || theta.len() != p_o.len() {
        return Err(Error::InvalidData(format!(
            "series lengths differ: θ {}, P_exp {}, P_o {}",
            theta.len(),
            p_exp.len(),
            p_o.len()
        )));
    }
    let filtered = filter_series(p_o, params.epsilon, params.filter_init);
    let x = tap_features(theta, &filtered, params.n_y, params.n_u, set)?;
    Ok((x, p_exp.to_vec()))
}

/// Same as [`collect_training`] but drives a live reservoir with
/// `P_i = K_in θ` instead of reading recorded `P_o`.
pub fn collect_training_live(
    theta: &[f64],
    p_exp: &[f64],
    reservoir: &mut ReservoirPlant,
    dt: f64,
    params: &FprcParams,
    set: FeatureSet,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p_o = theta
        .iter()
        .map(|t| reservoir.step(convert_angle(*t, params.k_in).p_i, dt).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    collect_training(theta, p_exp, &p_o, params, set)
}

/// Min-max bounds used to rescale angle and filtered pressure before
/// training, for the weight-contribution analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub theta: (f64, f64),
    pub p_filtered: (f64, f64),
}

/// [`collect_training`] with `θ` and `P̃_o` min-max normalized over the series.
pub fn collect_training_normalized(
    theta: &[f64],
    p_exp: &[f64],
    p_o: &[f64],
    params: &FprcParams,
) -> Result<(DMatrix<f64>, Vec<f64>, FeatureScaling)> {
    if theta.len() != p_exp.len() || theta.len() != p_o.len() {
        return Err(Error::InvalidData("series lengths differ".into()));
    }
    let filtered = filter_series(p_o, params.epsilon, params.filter_init);
    let (t_lo, t_hi) = min_max(theta)?;
    let (p_lo, p_hi) = min_max(&filtered)?;
    let theta_n: Vec<f64> = theta.iter().map(|v| (v - t_lo) / (t_hi - t_lo)).collect();
    let p_n: Vec<f64> = filtered.iter().map(|v| (v - p_lo) / (p_hi - p_lo)).collect();
    let x = tap_features(&theta_n, &p_n, params.n_y, params.n_u, FeatureSet::Reservoir)?;
    Ok((x, p_exp.to_vec(), FeatureScaling { theta: (t_lo, t_hi), p_filtered: (p_lo, p_hi) }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprcStep {
    pub p_ff: f64,
    pub p_i: f64,
    pub p_o: f64,
    pub p_o_filtered: f64,
    /// The converted input pressure hit the admissible range limits.
    pub clamped: bool,
}

/// A trained FPRC (or fuzzy-linear) model with its running state.
#[derive(Debug, Clone)]
pub struct FprcModel {
    params: FprcParams,
    features: FeatureSet,
    rules: FuzzyRuleSet,
    state: FprcState,
}

impl FprcModel {
    pub fn new(params: FprcParams, features: FeatureSet, rules: FuzzyRuleSet) -> Result<Self> {
        params.validate()?;
        rules.validate()?;
        let dim = params.feature_dim(features);
        if rules.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: rules.dim() });
        }
        let state = FprcState::new(&params);
        Ok(Self { params, features, rules, state })
    }

    /// Cluster and fit on a feature matrix built by [`collect_training`].
    pub fn train(x: &DMatrix<f64>, y: &[f64], params: FprcParams, features: FeatureSet, seed: u64) -> Result<(Self, FcmResult)> {
        params.validate()?;
        let (rules, fcm) = FuzzyRuleSet::train(x, y, &params.fuzzy, seed)?;
        Ok((Self::new(params, features, rules)?, fcm))
    }

    pub fn params(&self) -> &FprcParams {
        &self.params
    }

    pub fn features(&self) -> FeatureSet {
        self.features
    }

    pub fn rules(&self) -> &FuzzyRuleSet {
        &self.rules
    }

    pub fn state(&self) -> &FprcState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Predict every row of a feature matrix.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; x.ncols()];
        x.row_iter()
            .map(|row| {
                buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
                self.rules.infer(&buf)
            })
            .collect()
    }

    /// Step on a recorded reservoir pressure sample.
    pub fn step_recorded(&mut self, theta: f64, p_o: f64) -> Result<f64> {
        ensure_finite(theta, "reference angle")?;
        ensure_finite(p_o, "reservoir pressure")?;
        self.state.push(theta, p_o);
        self.rules.infer(&self.state.feature(self.features))
    }

    /// Full live pipeline: convert, drive the reservoir, filter, tap, infer.
    pub fn step(&mut self, theta_d: f64, reservoir: &mut ReservoirPlant, dt: f64) -> Result<FprcStep> {
        ensure_finite(theta_d, "reference angle")?;
        let conv = convert_angle(theta_d, self.params.k_in);
        let out = reservoir.step(conv.p_i, dt)?;
        let p_o_filtered = self.state.push(theta_d, out.value);
        let p_ff = self.rules.infer(&self.state.feature(self.features))?;
        Ok(FprcStep { p_ff, p_i: conv.p_i, p_o: out.value, p_o_filtered, clamped: conv.clamped || out.clamped })
    }
}
