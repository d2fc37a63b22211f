//! Echo State Network feedforward model (baseline).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fprc::TapBuffer;

/// Largest reservoir accepted (the dense recurrent matrix alone is 2 GiB).
pub const MAX_RESERVOIR_SIZE: usize = 16_384;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDistribution {
    /// U(0, 1)
    Uniform,
    /// U(-1, 1)
    UniformSigned,
    StandardNormal,
}

impl WeightDistribution {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            WeightDistribution::Uniform => rng.random::<f64>(),
            WeightDistribution::UniformSigned => rng.random_range(-1.0..1.0),
            WeightDistribution::StandardNormal => rng.sample(StandardNormal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsnParams {
    pub reservoir_size: usize,
    pub input_scaling: f64,
    pub leaky_rate: f64,
    pub spectral_radius: f64,
    pub washout: usize,
    /// Reference tap size.
    pub n_y: usize,
    pub alpha: f64,
    pub distribution: WeightDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EsnParams {
    fn default() -> Self {
        Self {
            reservoir_size: 800,
            input_scaling: 0.02,
            leaky_rate: 0.8,
            spectral_radius: 0.4,
            washout: 100,
            n_y: 5,
            alpha: 0.001,
            distribution: WeightDistribution::Uniform,
            seed: 0,
        }
    }
}

impl EsnParams {
    pub fn validate(&self) -> Result<()> {
        if self.reservoir_size == 0 {
            return Err(Error::InvalidSpec("reservoir size must be >= 1".into()));
        }
        if self.reservoir_size > MAX_RESERVOIR_SIZE {
            return Err(Error::Resource(format!(
                "reservoir size {} exceeds the {MAX_RESERVOIR_SIZE} limit",
                self.reservoir_size
            )));
        }
        if !(0.0..1.0).contains(&self.leaky_rate) {
            return Err(Error::InvalidSpec(format!("leaky rate must be in [0, 1), got {}", self.leaky_rate)));
        }
        if !(self.spectral_radius > 0.0) || !(self.input_scaling >= 0.0) {
            return Err(Error::InvalidSpec("spectral radius must be > 0 and input scaling >= 0".into()));
        }
        if self.n_y == 0 || !(self.alpha >= 0.0) {
            return Err(Error::InvalidSpec("tap size must be >= 1 and alpha >= 0".into()));
        }
        Ok(())
    }

    /// Length of the extended state `[1, θ taps, x]`.
    pub fn extended_dim(&self) -> usize {
        self.reservoir_size + self.n_y + 1
    }
}

/// Power iteration on `|λ|max`; `None` if it has not settled (complex or
/// tied dominant eigenvalues).
fn power_iteration(w: &DMatrix<f64>) -> Option<f64> {
    let n = w.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut wv = DVector::zeros(n);
    let mut prev = f64::NAN;
    let mut settled = 0;
    for _ in 0..POWER_MAX_ITER {
        wv.gemv(1.0, w, &v, 0.0);
        let lambda = wv.norm();
        if lambda == 0.0 {
            return Some(0.0);
        }
        v.copy_from(&wv);
        v /= lambda;
        if (lambda - prev).abs() <= POWER_TOL * lambda {
            settled += 1;
            if settled >= 3 {
                return Some(lambda);
            }
        } else {
            settled = 0;
        }
        prev = lambda;
    }
    None
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    power_iteration(w).unwrap_or_else(|| {
        w.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    })
}

#[derive(Debug, Clone)]
pub struct EsnModel {
    params: EsnParams,
    w_input: DVector<f64>,
    w_r: DMatrix<f64>,
    x: DVector<f64>,
    pre: DVector<f64>,
    taps: TapBuffer,
    w_out: Option<DVector<f64>>,
}

impl EsnModel {
    /// Draw the fixed input and recurrent weights from `params.seed` and
    /// rescale the recurrent matrix to the requested spectral radius.
    pub fn new(params: EsnParams) -> Result<Self> {
        params.validate()?;
        let r = params.reservoir_size;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let dist = params.distribution;
        let w_input = DVector::from_fn(r, |_, _| params.input_scaling * dist.sample(&mut rng));
        let mut w_r = DMatrix::from_fn(r, r, |_, _| dist.sample(&mut rng));
        let rho = spectral_radius(&w_r);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Numeric(format!("random reservoir has spectral radius {rho}")));
        }
        w_r *= params.spectral_radius / rho;
        Ok(Self {
            w_input,
            w_r,
            x: DVector::zeros(r),
            pre: DVector::zeros(r),
            taps: TapBuffer::new(params.n_y),
            w_out: None,
            params,
        })
    }

    /// Rebuild a trained model from its parameters (seed included) and readout.
    pub fn from_parts(params: EsnParams, w_out: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(params)?;
        m.set_readout(w_out)?;
        Ok(m)
    }

    pub fn params(&self) -> &EsnParams {
        &self.params
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn set_state(&mut self, x: DVector<f64>) -> Result<()> {
        if x.len() != self.params.reservoir_size {
            return Err(Error::Dimension { expected: self.params.reservoir_size, got: x.len() });
        }
        self.x = x;
        Ok(())
    }

    pub fn input_weights(&self) -> &DVector<f64> {
        &self.w_input
    }

    pub fn recurrent_weights(&self) -> &DMatrix<f64> {
        &self.w_r
    }

    /// Replace the recurrent matrix (tests and hand-built reservoirs).
    pub fn set_recurrent_weights(&mut self, w_r: DMatrix<f64>) -> Result<()> {
        let r = self.params.reservoir_size;
        if w_r.shape() != (r, r) {
            return Err(Error::Dimension { expected: r, got: w_r.nrows() });
        }
        self.w_r = w_r;
        Ok(())
    }

    pub fn readout_weights(&self) -> Option<&DVector<f64>> {
        self.w_out.as_ref()
    }

    pub fn set_readout(&mut self, w_out: Vec<f64>) -> Result<()> {
        let d = self.params.extended_dim();
        if w_out.len() != d {
            return Err(Error::Dimension { expected: d, got: w_out.len() });
        }
        self.w_out = Some(DVector::from_vec(w_out));
        Ok(())
    }

    /// Zero hidden state and tap history.
    pub fn reset(&mut self) {
        self.x.fill(0.0);
        self.taps.clear();
    }

    /// `x ← γx + (1−γ) tanh(w_input θ_d + W_r x)`
    pub fn update(&mut self, theta_d: f64) -> Result<()> {
        ensure_finite(theta_d, "ESN input")?;
        let g = self.params.leaky_rate;
        self.pre.copy_from(&self.w_input);
        self.pre.gemv(1.0, &self.w_r, &self.x, theta_d);
        for (x, p) in self.x.iter_mut().zip(self.pre.iter()) {
            *x = g * *x + (1.0 - g) * p.tanh();
        }
        Ok(())
    }

    /// `[1, θ_tapsᵀ, xᵀ]ᵀ`
    pub fn extended_state(&self, theta_taps: &[f64]) -> Result<Vec<f64>> {
        if theta_taps.len() != self.params.n_y {
            return Err(Error::Dimension { expected: self.params.n_y, got: theta_taps.len() });
        }
        let mut out = Vec::with_capacity(self.params.extended_dim());
        out.push(1.0);
        out.extend_from_slice(theta_taps);
        out.extend(self.x.iter());
        Ok(out)
    }

    pub fn readout(&self, extended: &[f64]) -> Result<f64> {
        esn_readout(self.w_out.as_ref(), extended)
    }

    /// Drive the reservoir from its current state with `theta` and return the
    /// extended states from index `washout` onward (one row per sample).
    pub fn collect_states(&mut self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let washout = self.params.washout;
        if theta.len() <= washout {
            return Err(Error::InvalidData(format!(
                "series of {} samples does not outlast the {washout}-step washout",
                theta.len()
            )));
        }
        self.collect_states_skip(theta, washout)
    }

    /// Like [`collect_states`](Self::collect_states) with an explicit number
    /// of leading rows to drop, so long series can be processed in chunks.
    pub fn collect_states_skip(&mut self, theta: &[f64], skip: usize) -> Result<DMatrix<f64>> {
        let d = self.params.extended_dim();
        let rows = theta.len().saturating_sub(skip);
        let mut buf = Vec::with_capacity(rows * d);
        let mut taps = vec![0.0; self.params.n_y];
        for (k, &th) in theta.iter().enumerate() {
            self.taps.push(th);
            if k >= skip {
                self.taps.write_into(&mut taps);
                buf.extend(self.extended_state(&taps)?);
            }
            self.update(th)?;
        }
        Ok(DMatrix::from_row_slice(rows, d, &buf))
    }

    /// One feedforward step: readout on the current state, then advance it.
    pub fn step(&mut self, theta_d: f64) -> Result<f64> {
        ensure_finite(theta_d, "ESN input")?;
        self.taps.push(theta_d);
        let taps = self.taps.values();
        let out = self.readout(&self.extended_state(&taps)?)?;
        self.update(theta_d)?;
        Ok(out)
    }
}

/// `P_ff = w_out · x*`
pub fn esn_readout(w_out: Option<&DVector<f64>>, extended: &[f64]) -> Result<f64> {
    let w = w_out.ok_or_else(|| Error::State("ESN readout is not trained".into()))?;
    if w.len() != extended.len() {
        return Err(Error::Dimension { expected: w.len(), got: extended.len() });
    }
    Ok(w.iter().zip(extended).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(r: usize) -> EsnParams {
        EsnParams { reservoir_size: r, washout: 10, seed: 3, ..Default::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = EsnModel::new(small(50)).unwrap();
        let b = EsnModel::new(small(50)).unwrap();
        assert_eq!(a.recurrent_weights(), b.recurrent_weights());
        let c = EsnModel::new(EsnParams { seed: 4, ..small(50) }).unwrap();
        assert_ne!(a.recurrent_weights(), c.recurrent_weights());
    }

    #[test]
    fn scaled_to_spectral_radius() {
        for dist in [WeightDistribution::Uniform, WeightDistribution::UniformSigned, WeightDistribution::StandardNormal] {
            let m = EsnModel::new(EsnParams { distribution: dist, ..small(60) }).unwrap();
            let eig = m.recurrent_weights().clone().complex_eigenvalues();
            let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((rho - 0.4).abs() < 1e-6, "{dist:?}: {rho}");
        }
    }

    #[test]
    fn zero_input_scaling_keeps_zero_state() {
        let mut m = EsnModel::new(EsnParams { input_scaling: 0.0, ..small(20) }).unwrap();
        for k in 0..50 {
            m.update(k as f64).unwrap();
        }
        assert!(m.state().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_leak() {
        let mut m = EsnModel::new(small(5)).unwrap();
        m.set_recurrent_weights(DMatrix::zeros(5, 5)).unwrap();
        let x0 = DVector::from_vec(vec![0.5, -0.2, 0.9, 0.0, -0.7]);
        m.set_state(x0.clone()).unwrap();
        m.update(0.0).unwrap();
        assert!((m.state() - x0 * 0.8).amax() < 1e-15);
    }

    #[test]
    fn zero_leak_zero_input() {
        let mut m = EsnModel::new(EsnParams { leaky_rate: 0.0, ..small(8) }).unwrap();
        m.update(0.0).unwrap();
        assert!(m.state().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_recursion_matches_hand_computation() {
        let mut m = EsnModel::new(small(1)).unwrap();
        let w_in = m.input_weights()[0];
        let w = m.recurrent_weights()[(0, 0)];
        assert!((w - 0.4).abs() < 1e-12);
        let mut x: f64 = 0.0;
        for k in 0..10 {
            let u = 3.0 * (k as f64 * 0.7).sin();
            m.update(u).unwrap();
            x = 0.8 * x + 0.2 * (w_in * u + w * x).tanh();
            assert!((m.state()[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn extended_state_layout() {
        let m = EsnModel::new(EsnParams { reservoir_size: 800, ..Default::default() }).unwrap();
        let e = m.extended_state(&[0.0; 5]).unwrap();
        assert_eq!(e.len(), 806);
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|v| *v == 0.0));
        let a = m.extended_state(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = m.extended_state(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_ne!(a, b);
        assert!(matches!(m.extended_state(&[0.0; 4]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn readout_bias_linearity_and_untrained() {
        assert!(matches!(esn_readout(None, &[1.0]), Err(Error::State(_))));
        let w = DVector::from_vec(vec![7.0, 0.0, 0.0]);
        assert_eq!(esn_readout(Some(&w), &[1.0, 3.0, -2.0]).unwrap(), 7.0);
        let w = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let (x, y) = ([1.0, 2.0, 3.0], [0.0, -1.0, 4.0]);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = esn_readout(Some(&w), &mix).unwrap();
        let rhs = 2.0 * esn_readout(Some(&w), &x).unwrap() - 3.0 * esn_readout(Some(&w), &y).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn collect_states_rows_and_errors() {
        let mut m = EsnModel::new(small(12)).unwrap();
        let theta: Vec<f64> = (0..11).map(|k| k as f64).collect();
        assert_eq!(m.collect_states(&theta).unwrap().nrows(), 1);
        m.reset();
        assert!(matches!(m.collect_states(&theta[..10]), Err(Error::InvalidData(_))));

        let series: Vec<f64> = (0..300).map(|k| 30.0 + 20.0 * (k as f64 * 0.05).sin()).collect();
        let mut a = EsnModel::new(small(12)).unwrap();
        let mut b = EsnModel::new(small(12)).unwrap();
        assert_eq!(a.collect_states(&series).unwrap(), b.collect_states(&series).unwrap());
    }

    #[test]
    fn state_stays_in_tanh_range() {
        let mut m = EsnModel::new(small(40)).unwrap();
        for k in 0..500 {
            m.update(60.0 * (k as f64 * 0.1).sin()).unwrap();
            assert!(m.state().amax() < 1.0);
        }
    }

    #[test]
    fn too_large_is_resource_error() {
        let p = EsnParams { reservoir_size: MAX_RESERVOIR_SIZE + 1, ..Default::default() };
        assert!(matches!(EsnModel::new(p), Err(Error::Resource(_))));
        assert!(matches!(EsnModel::new(EsnParams { leaky_rate: 1.0, ..small(4) }), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn step_matches_collected_rows() {
        let series: Vec<f64> = (0..80).map(|k| 10.0 + (k as f64 * 0.2).cos()).collect();
        let mut a = EsnModel::new(small(16)).unwrap();
        let rows = a.collect_states(&series).unwrap();
        let w: Vec<f64> = (0..a.params().extended_dim()).map(|j| (j as f64 * 0.37).sin()).collect();
        let mut b = EsnModel::from_parts(small(16), w.clone()).unwrap();
        let outs: Vec<f64> = series.iter().map(|t| b.step(*t).unwrap()).collect();
        for (i, row) in rows.row_iter().enumerate() {
            let expect: f64 = row.iter().zip(&w).map(|(x, y)| x * y).sum();
            assert!((outs[i + 10] - expect).abs() < 1e-12);
        }
    }
}
