//! Ridge solvers, error metrics, k-fold cross-validation, weight analysis,
//! parameter sweeps and execution-time benchmarks.

mod bench;
mod ridge;
mod sweep;
mod weights;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{benchmark_execution, TimingStats};
pub use ridge::{ridge_solve, NormalEquations};
pub use sweep::{run_sweep, CellMetrics, CellTiming, SweepAxis, SweepCell, SweepPoint, SweepResult};
pub use weights::{weight_contributions, RuleContribution, WeightReport};

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidData("rmse of empty series".into()));
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// Min-max scaling onto `[0, 1]`.
pub fn normalize_minmax(x: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = min_max(x)?;
    Ok(x.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

pub(crate) fn min_max(x: &[f64]) -> Result<(f64, f64)> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateRange(format!("series has no spread (min {lo}, max {hi})")));
    }
    Ok((lo, hi))
}

/// Split `0..n` into `k` contiguous blocks whose sizes differ by at most one.
pub fn contiguous_folds(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidData(format!("{n} samples cannot be split into {k} folds")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// A model that can be fit on a subset of precomputed contiguous blocks and
/// scored on any block. Implementors prepare their per-block data up front.
pub trait FoldModel: Sync {
    type Fitted: Send;

    fn blocks(&self) -> usize;

    fn fit(&self, train_blocks: &[usize]) -> Result<Self::Fitted>;

    /// Sum of squared errors and sample count of `model` on one block.
    fn block_sse(&self, model: &Self::Fitted, block: usize) -> Result<(f64, usize)>;
}

/// `(Σ(p − t)², n)` for [`FoldModel::block_sse`] implementations.
pub fn sse(pred: &[f64], target: &[f64]) -> Result<(f64, usize)> {
    if pred.len() != target.len() {
        return Err(Error::Dimension { expected: target.len(), got: pred.len() });
    }
    Ok((pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum(), pred.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub e_train: f64,
    pub e_val: f64,
    /// `sqrt(e_train² + e_val²)`
    pub e_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    pub best_fold: usize,
}

impl CvReport {
    pub fn best(&self) -> &FoldScore {
        &self.folds[self.best_fold]
    }

    pub fn mean_std(&self, f: impl Fn(&FoldScore) -> f64) -> (f64, f64) {
        mean_std(&self.folds.iter().map(f).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fold", "e_train_kPa", "e_val_kPa", "e_norm_kPa", "selected"])?;
        for s in &self.folds {
            w.write_record([
                s.fold.to_string(),
                s.e_train.to_string(),
                s.e_val.to_string(),
                s.e_norm.to_string(),
                (s.fold == self.best_fold).to_string(),
            ])?;
        }
        finish_csv(w)
    }
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Lowest-`e_norm` fold, with ties going to the lowest fold index.
pub fn select_fold(scores: &[FoldScore]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        let b = &scores[best];
        if s.e_norm < b.e_norm || (s.e_norm == b.e_norm && s.fold < b.fold) {
            best = i;
        }
    }
    best
}

fn pooled_rmse<M: FoldModel>(model: &M, fitted: &M::Fitted, blocks: &[usize]) -> Result<f64> {
    let (mut total, mut n) = (0.0, 0);
    for &b in blocks {
        let (s, m) = model.block_sse(fitted, b)?;
        total += s;
        n += m;
    }
    if n == 0 {
        return Err(Error::InvalidData("rmse of empty series".into()));
    }
    Ok((total.max(0.0) / n as f64).sqrt())
}

/// Train one model per held-out block; return the report and the model with
/// the smallest normalized error.
pub fn kfold_cv<M: FoldModel>(model: &M) -> Result<(CvReport, M::Fitted)> {
    let k = model.blocks();
    if k < 2 {
        return Err(Error::InvalidSpec(format!("k-fold needs k >= 2, got {k}")));
    }
    let results: Vec<(FoldScore, M::Fitted)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..k).filter(|&b| b != fold).collect();
            let fitted = model.fit(&train)?;
            let e_train = pooled_rmse(model, &fitted, &train)?;
            let e_val = pooled_rmse(model, &fitted, &[fold])?;
            let score = FoldScore { fold, e_train, e_val, e_norm: e_train.hypot(e_val) };
            Ok((score, fitted))
        })
        .collect::<Result<_>>()?;
    let (folds, mut fitted): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let best_fold = select_fold(&folds);
    let chosen = fitted.swap_remove(best_fold);
    Ok((CvReport { folds, best_fold }, chosen))
}
