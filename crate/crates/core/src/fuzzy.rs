//! Takagi-Sugeno fuzzy readout.
//!
//! Rules are found by fuzzy c-means on the training states; each rule gets its
//! own affine output layer fit by ridge regression weighted with the squared
//! FCM memberships. At inference time the rule outputs are blended with
//! normalized Gaussian memberships around the FCM centers.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::ridge_solve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcmConfig {
    pub clusters: usize,
    /// FCM exponent `m > 1`.
    pub fuzziness: f64,
    /// Stop once no center moves further than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent initializations; the run with the lowest final objective wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self { clusters: 8, fuzziness: 2.0, tol: 1e-6, max_iter: 300, restarts: 1, seed: 0 }
    }
}

/// `N × n_c` FCM membership degrees; every row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    u: DMatrix<f64>,
}

impl MembershipMatrix {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        for (k, row) in u.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidData(format!("membership row {k} is not a distribution (sum {s})")));
            }
        }
        Ok(Self { u })
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn clusters(&self) -> usize {
        self.u.ncols()
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.u[(k, i)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Index of the largest membership in row `k`.
    pub fn dominant(&self, k: usize) -> usize {
        let row = self.u.row(k);
        (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best })
    }
}

#[derive(Debug, Clone)]
pub struct FcmResult {
    pub centers: Vec<Vec<f64>>,
    pub memberships: MembershipMatrix,
    /// Objective `Σ u^m ‖x − c‖²` at each iterate; non-increasing.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FcmResult {
    pub fn final_objective(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// `u^m`, avoiding `powf` for the usual `m = 2`.
fn pow_m(u: f64, m: f64) -> f64 {
    if m == 2.0 {
        u * u
    } else {
        u.powf(m)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Membership of one point given squared distances to every center.
/// A zero distance gives a one-hot row on the first coincident center.
fn fcm_row(d2: &[f64], fuzziness: f64, out: &mut [f64]) {
    if let Some(hit) = d2.iter().position(|d| *d == 0.0) {
        out.iter_mut().for_each(|u| *u = 0.0);
        out[hit] = 1.0;
        return;
    }
    let p = 1.0 / (fuzziness - 1.0);
    let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (u, d) in out.iter_mut().zip(d2) {
        *u = if p == 1.0 { dmin / d } else { (dmin / d).powf(p) };
        total += *u;
    }
    out.iter_mut().for_each(|u| *u /= total);
}

fn to_rows(data: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = data.shape();
    let mut rows = vec![0.0; n * d];
    for k in 0..n {
        for j in 0..d {
            rows[k * d + j] = data[(k, j)];
        }
    }
    rows
}

fn initial_centers(rows: &[f64], dim: usize, clusters: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let n = rows.len() / dim;
    for _ in 0..64 {
        let picks = index::sample(rng, n, clusters);
        let centers: Vec<Vec<f64>> = picks.iter().map(|k| rows[k * dim..(k + 1) * dim].to_vec()).collect();
        let distinct = (0..clusters).all(|i| (i + 1..clusters).all(|j| centers[i] != centers[j]));
        if distinct {
            return Ok(centers);
        }
    }
    Err(Error::DegenerateClustering(format!("could not draw {clusters} distinct data rows as initial centers")))
}

/// Fuzzy c-means on the rows of `data` (N × dim).
pub fn fcm_cluster(data: &DMatrix<f64>, cfg: &FcmConfig) -> Result<FcmResult> {
    let (n, dim) = data.shape();
    let c = cfg.clusters;
    if c == 0 {
        return Err(Error::InvalidSpec("need at least one cluster".into()));
    }
    if !(cfg.fuzziness > 1.0) {
        return Err(Error::InvalidSpec(format!("fuzziness must exceed 1, got {}", cfg.fuzziness)));
    }
    if n < c {
        return Err(Error::InvalidData(format!("{n} samples cannot form {c} clusters")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("clustering data contains non-finite values".into()));
    }
    let rows = to_rows(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<FcmResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let run = fcm_run(&rows, n, dim, cfg, &mut rng)?;
        let better = best.as_ref().is_none_or(|b| run.final_objective() < b.final_objective());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one FCM run"))
}

fn fcm_run(rows: &[f64], n: usize, dim: usize, cfg: &FcmConfig, rng: &mut ChaCha8Rng) -> Result<FcmResult> {
    let c = cfg.clusters;
    let mut centers = initial_centers(rows, dim, c, rng)?;
    let m = cfg.fuzziness;

    let mut u = vec![0.0; n * c];
    let mut d2 = vec![0.0; c];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let update_memberships = |centers: &[Vec<f64>], u: &mut [f64], d2: &mut [f64]| -> f64 {
        let mut j = 0.0;
        for k in 0..n {
            let x = &rows[k * dim..(k + 1) * dim];
            for (d, ci) in d2.iter_mut().zip(centers) {
                *d = sq_dist(x, ci);
            }
            let uk = &mut u[k * c..(k + 1) * c];
            fcm_row(d2, m, uk);
            j += uk.iter().zip(d2.iter()).map(|(ui, di)| pow_m(*ui, m) * di).sum::<f64>();
        }
        j
    };

    while iterations < cfg.max_iter {
        iterations += 1;
        objective.push(update_memberships(&centers, &mut u, &mut d2));

        let mut next = vec![vec![0.0; dim]; c];
        let mut mass = vec![0.0; c];
        for k in 0..n {
            let x = &rows[k * dim..(k + 1) * dim];
            for i in 0..c {
                let w = pow_m(u[k * c + i], m);
                mass[i] += w;
                for (acc, v) in next[i].iter_mut().zip(x) {
                    *acc += w * v;
                }
            }
        }
        let mut shift: f64 = 0.0;
        for i in 0..c {
            if mass[i] > 0.0 {
                next[i].iter_mut().for_each(|v| *v /= mass[i]);
            } else {
                next[i] = centers[i].clone();
            }
            shift = shift.max(sq_dist(&next[i], &centers[i]).sqrt());
        }
        centers = next;
        if shift < cfg.tol {
            converged = true;
            break;
        }
    }
    objective.push(update_memberships(&centers, &mut u, &mut d2));

    for i in 0..c {
        for j in i + 1..c {
            if sq_dist(&centers[i], &centers[j]).sqrt() < 1e-12 {
                return Err(Error::DegenerateClustering(format!("centers {i} and {j} collapsed")));
            }
        }
    }
    let memberships = MembershipMatrix::new(DMatrix::from_row_slice(n, c, &u))?;
    Ok(FcmResult { centers, memberships, objective, iterations, converged })
}

/// Prepend the unit regressor: `[1, x]` for every row.
pub fn with_bias(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + 1, |k, j| if j == 0 { 1.0 } else { x[(k, j - 1)] })
}

/// Per-rule ridge regression weighted by `u_i(k)²`. Row `i` of the result is
/// the output layer of rule `i` over `[1, x]`.
pub fn train_fuzzy_readout(x: &DMatrix<f64>, y: &[f64], u: &MembershipMatrix, alpha: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    if u.rows() != x.nrows() {
        return Err(Error::Dimension { expected: x.nrows(), got: u.rows() });
    }
    let regressors = with_bias(x);
    let rows: Vec<DVector<f64>> = (0..u.clusters())
        .into_par_iter()
        .map(|i| {
            let w: Vec<f64> = (0..u.rows()).map(|k| u.get(k, i).powi(2)).collect();
            ridge_solve(&regressors, y, alpha, Some(&w))
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(rows.len(), x.ncols() + 1);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    Ok(out)
}

/// `β_i = exp(−‖x − c_i‖² / 2σ²)`.
pub fn gaussian_membership(x: &[f64], centers: &[Vec<f64>], sigma: f64) -> Vec<f64> {
    let s = 2.0 * sigma * sigma;
    centers.iter().map(|c| (-sq_dist(x, c) / s).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMembership {
    pub weights: Vec<f64>,
    /// All memberships underflowed and the nearest center took full weight.
    pub fallback: bool,
}

/// Scale `β` to sum to one. If every entry underflowed to zero, fall back to
/// a one-hot on the center with the smallest squared distance `sq_dist`.
pub fn normalize_memberships(beta: &[f64], sq_dist: &[f64]) -> NormalizedMembership {
    let total: f64 = beta.iter().sum();
    if total > 0.0 {
        return NormalizedMembership { weights: beta.iter().map(|b| b / total).collect(), fallback: false };
    }
    let nearest = (0..sq_dist.len()).fold(0, |best, i| if sq_dist[i] < sq_dist[best] { i } else { best });
    log::warn!("gaussian memberships underflowed; using nearest center {nearest}");
    let mut weights = vec![0.0; beta.len()];
    weights[nearest] = 1.0;
    NormalizedMembership { weights, fallback: true }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyParams {
    pub clusters: usize,
    /// Gaussian membership scale σ.
    pub sigma: f64,
    pub fuzziness: f64,
    pub alpha: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
    pub fcm_restarts: usize,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        Self { clusters: 8, sigma: 2.0, fuzziness: 2.0, alpha: 0.001, fcm_tol: 1e-6, fcm_max_iter: 300, fcm_restarts: 1 }
    }
}

impl FuzzyParams {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || !(self.sigma > 0.0) || !(self.fuzziness > 1.0) || !(self.alpha >= 0.0) {
            return Err(Error::InvalidSpec(format!("invalid fuzzy readout parameters: {self:?}")));
        }
        Ok(())
    }
}

/// Trained T-S rule base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRuleSet {
    pub centers: Vec<Vec<f64>>,
    /// One row per rule over `[1, x]`.
    pub weights: Vec<Vec<f64>>,
    pub sigma: f64,
    pub fuzziness: f64,
    pub seed: u64,
}

impl FuzzyRuleSet {
    /// Cluster `x` (N × dim), then fit the per-rule output layers to `y`.
    pub fn train(x: &DMatrix<f64>, y: &[f64], params: &FuzzyParams, seed: u64) -> Result<(Self, FcmResult)> {
        params.validate()?;
        let fcm = fcm_cluster(
            x,
            &FcmConfig {
                clusters: params.clusters,
                fuzziness: params.fuzziness,
                tol: params.fcm_tol,
                max_iter: params.fcm_max_iter,
                restarts: params.fcm_restarts,
                seed,
            },
        )?;
        let w = train_fuzzy_readout(x, y, &fcm.memberships, params.alpha)?;
        let weights = w.row_iter().map(|r| r.iter().copied().collect()).collect();
        let rules = Self { centers: fcm.centers.clone(), weights, sigma: params.sigma, fuzziness: params.fuzziness, seed };
        rules.validate()?;
        Ok((rules, fcm))
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.centers.len();
        if c == 0 || self.weights.len() != c {
            return Err(Error::State(format!("rule set has {c} centers and {} weight rows", self.weights.len())));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidSpec(format!("sigma must be positive, got {}", self.sigma)));
        }
        let dim = self.dim();
        if self.centers.iter().any(|ci| ci.len() != dim) || self.weights.iter().any(|w| w.len() != dim + 1) {
            return Err(Error::State("inconsistent rule dimensions".into()));
        }
        Ok(())
    }

    pub fn rules(&self) -> usize {
        self.centers.len()
    }

    /// Dimension of the antecedent state `x`.
    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Affine output of every rule at `x`.
    pub fn rule_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    /// Normalized Gaussian memberships, evaluated relative to the nearest
    /// center so they cannot all underflow.
    pub fn memberships(&self, x: &[f64]) -> Vec<f64> {
        let d2: Vec<f64> = self.centers.iter().map(|c| sq_dist(x, c)).collect();
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let s = 2.0 * self.sigma * self.sigma;
        let beta: Vec<f64> = d2.iter().map(|d| (-(d - dmin) / s).exp()).collect();
        normalize_memberships(&beta, &d2).weights
    }

    pub fn infer(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        let out: f64 = self.memberships(x).iter().zip(self.rule_outputs(x)).map(|(b, p)| b * p).sum();
        if !out.is_finite() {
            return Err(Error::Numeric("fuzzy inference produced a non-finite output".into()));
        }
        Ok(out)
    }
}

/// `P_ff = β̄ W [1, x]ᵀ` for a trained rule set (or a state error otherwise).
pub fn fuzzy_infer(rules: Option<&FuzzyRuleSet>, x: &[f64]) -> Result<f64> {
    rules.ok_or_else(|| Error::State("fuzzy rule set is not trained".into()))?.infer(x)
}
