//! Training and evaluation of the three feedforward models on recorded
//! datasets, and the model comparison table.

use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::esn::{EsnModel, EsnParams};
use crate::fprc::{collect_training, collect_training_normalized, FeatureSet, FprcModel, FprcParams};
use crate::fuzzy::FuzzyRuleSet;
use crate::plant::ReservoirParams;
use crate::training::{
    benchmark_execution, contiguous_folds, kfold_cv, rmse, run_sweep, sse, weight_contributions, CellMetrics,
    CellTiming, CvReport, FoldModel, NormalEquations, SweepAxis, SweepResult, TimingStats, WeightReport,
};

/// Rows per chunk when streaming reservoir states into the normal equations.
const STATE_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Esn,
    Fprc,
    FuzzyLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Esn, ModelKind::Fprc, ModelKind::FuzzyLinear];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Esn => "esn",
            ModelKind::Fprc => "fprc",
            ModelKind::FuzzyLinear => "fuzzy-linear",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Esn => "ESN",
            ModelKind::Fprc => "FPRC",
            ModelKind::FuzzyLinear => "Fuzzy-linear",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown model '{s}' (expected esn, fprc or fuzzy-linear)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnArtifact {
    /// Reservoir weights are regenerated from `params.seed`.
    pub params: EsnParams,
    pub w_out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprcArtifact {
    pub params: FprcParams,
    pub reservoir: ReservoirParams,
    pub rules: FuzzyRuleSet,
}

impl FprcArtifact {
    pub fn model(&self, features: FeatureSet) -> Result<FprcModel> {
        FprcModel::new(self.params.clone(), features, self.rules.clone())
    }
}

/// A trained feedforward model as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelArtifact {
    Esn(EsnArtifact),
    Fprc(FprcArtifact),
    FuzzyLinear(FprcArtifact),
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelArtifact::Esn(_) => ModelKind::Esn,
            ModelArtifact::Fprc(_) => ModelKind::Fprc,
            ModelArtifact::FuzzyLinear(_) => ModelKind::FuzzyLinear,
        }
    }

    /// Number of trainable output weights.
    pub fn weight_count(&self) -> usize {
        match self {
            ModelArtifact::Esn(a) => a.w_out.len(),
            ModelArtifact::Fprc(a) | ModelArtifact::FuzzyLinear(a) => a.rules.weights.iter().map(Vec::len).sum(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_str(s)?;
        match &a {
            ModelArtifact::Esn(e) => {
                e.params.validate()?;
                if e.w_out.len() != e.params.extended_dim() {
                    return Err(Error::Dimension { expected: e.params.extended_dim(), got: e.w_out.len() });
                }
            }
            ModelArtifact::Fprc(f) | ModelArtifact::FuzzyLinear(f) => {
                f.params.validate()?;
                f.rules.validate()?;
            }
        }
        Ok(a)
    }

    /// Predictions and aligned targets on a recorded dataset. The ESN skips
    /// its washout; the fuzzy models use the recorded reservoir pressure.
    pub fn predict(&self, ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        ds.validate()?;
        match self {
            ModelArtifact::Esn(a) => {
                let mut m = EsnModel::from_parts(a.params.clone(), a.w_out.clone())?;
                let washout = a.params.washout;
                if ds.len() <= washout {
                    return Err(Error::InvalidData(format!(
                        "{} samples do not outlast the {washout}-step washout",
                        ds.len()
                    )));
                }
                let pred = ds.theta.iter().map(|t| m.step(*t)).collect::<Result<Vec<_>>>()?;
                Ok((pred[washout..].to_vec(), ds.p_exp[washout..].to_vec()))
            }
            ModelArtifact::Fprc(a) | ModelArtifact::FuzzyLinear(a) => {
                let set = feature_set(self.kind());
                let model = a.model(set)?;
                let (x, y) = collect_training(&ds.theta, &ds.p_exp, &ds.p_o, &a.params, set)?;
                Ok((model.predict_rows(&x)?, y))
            }
        }
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<f64> {
        let (p, y) = self.predict(ds)?;
        rmse(&p, &y)
    }

    /// Step-by-step inference over the whole series, as a controller would
    /// run it. Used for timing.
    pub fn run_inference(&self, ds: &Dataset) -> Result<Vec<f64>> {
        match self {
            ModelArtifact::Esn(a) => {
                let mut m = EsnModel::from_parts(a.params.clone(), a.w_out.clone())?;
                ds.theta.iter().map(|t| m.step(*t)).collect()
            }
            ModelArtifact::Fprc(a) | ModelArtifact::FuzzyLinear(a) => {
                let mut m = a.model(feature_set(self.kind()))?;
                ds.theta.iter().zip(&ds.p_o).map(|(t, p)| m.step_recorded(*t, *p)).collect()
            }
        }
    }
}

pub fn feature_set(kind: ModelKind) -> FeatureSet {
    match kind {
        ModelKind::FuzzyLinear => FeatureSet::ThetaOnly,
        _ => FeatureSet::Reservoir,
    }
}

/// Hyperparameters of every model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub esn: EsnParams,
    pub fprc: FprcParams,
    pub reservoir: ReservoirParams,
    pub folds: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            esn: EsnParams::default(),
            fprc: FprcParams::default(),
            reservoir: ReservoirParams::default(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub cv: CvReport,
    /// RMSE of the selected model over the complete training set.
    pub train_rmse: f64,
}

struct FuzzyFolds<'a> {
    x: DMatrix<f64>,
    y: Vec<f64>,
    folds: Vec<Range<usize>>,
    params: &'a FprcParams,
    seed: u64,
}

impl FoldModel for FuzzyFolds<'_> {
    type Fitted = FuzzyRuleSet;

    fn blocks(&self) -> usize {
        self.folds.len()
    }

    fn fit(&self, train: &[usize]) -> Result<FuzzyRuleSet> {
        let rows: Vec<usize> = train.iter().flat_map(|b| self.folds[*b].clone()).collect();
        let x = self.x.select_rows(rows.iter());
        let y: Vec<f64> = rows.iter().map(|k| self.y[*k]).collect();
        Ok(FuzzyRuleSet::train(&x, &y, &self.params.fuzzy, self.seed)?.0)
    }

    fn block_sse(&self, rules: &FuzzyRuleSet, block: usize) -> Result<(f64, usize)> {
        let r = self.folds[block].clone();
        let mut buf = vec![0.0; self.x.ncols()];
        let pred = r
            .clone()
            .map(|k| {
                buf.iter_mut().zip(self.x.row(k).iter()).for_each(|(b, v)| *b = *v);
                rules.infer(&buf)
            })
            .collect::<Result<Vec<_>>>()?;
        sse(&pred, &self.y[r])
    }
}

/// Train the FPRC (`Reservoir` features) or fuzzy-linear (`ThetaOnly`) model
/// with k-fold cross-validation on recorded data.
pub fn train_fuzzy(
    ds: &Dataset,
    params: &FprcParams,
    reservoir: &ReservoirParams,
    set: FeatureSet,
    folds: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    params.validate()?;
    ds.validate()?;
    let (x, y) = collect_training(&ds.theta, &ds.p_exp, &ds.p_o, params, set)?;
    let model = FuzzyFolds { x, y, folds: contiguous_folds(ds.len(), folds)?, params, seed };
    let (cv, rules) = kfold_cv(&model)?;
    let art = FprcArtifact { params: params.clone(), reservoir: reservoir.clone(), rules };
    let artifact = match set {
        FeatureSet::Reservoir => ModelArtifact::Fprc(art),
        FeatureSet::ThetaOnly => ModelArtifact::FuzzyLinear(art),
    };
    let train_rmse = artifact.evaluate(ds)?;
    Ok(TrainOutcome { artifact, cv, train_rmse })
}

struct EsnFolds {
    blocks: Vec<NormalEquations>,
    alpha: f64,
}

impl EsnFolds {
    /// Each block is driven from a zero state with its own washout.
    fn new(template: &EsnModel, ds: &Dataset, folds: &[Range<usize>]) -> Result<Self> {
        let p = template.params();
        let blocks = folds
            .par_iter()
            .map(|r| {
                if r.len() <= p.washout {
                    return Err(Error::InvalidData(format!(
                        "fold of {} samples does not outlast the {}-step washout",
                        r.len(),
                        p.washout
                    )));
                }
                let mut m = template.clone();
                m.reset();
                let mut ne = NormalEquations::new(p.extended_dim());
                let mut start = r.start;
                let mut skip = p.washout;
                while start < r.end {
                    let end = (start + skip + STATE_CHUNK).min(r.end);
                    let states = m.collect_states_skip(&ds.theta[start..end], skip)?;
                    ne.add_rows(&states, &ds.p_exp[start + skip..end], None)?;
                    start = end;
                    skip = 0;
                }
                Ok(ne)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks, alpha: p.alpha })
    }
}

impl FoldModel for EsnFolds {
    type Fitted = DVector<f64>;

    fn blocks(&self) -> usize {
        self.blocks.len()
    }

    fn fit(&self, train: &[usize]) -> Result<DVector<f64>> {
        let mut ne = NormalEquations::new(self.blocks[0].dim());
        for b in train {
            ne.merge(&self.blocks[*b])?;
        }
        ne.solve(self.alpha)
    }

    fn block_sse(&self, w: &DVector<f64>, block: usize) -> Result<(f64, usize)> {
        let ne = &self.blocks[block];
        Ok((ne.sse(w)?, ne.rows()))
    }
}

pub fn train_esn(ds: &Dataset, params: &EsnParams, folds: usize) -> Result<TrainOutcome> {
    ds.validate()?;
    let template = EsnModel::new(params.clone())?;
    let model = EsnFolds::new(&template, ds, &contiguous_folds(ds.len(), folds)?)?;
    let (cv, w) = kfold_cv(&model)?;
    let artifact = ModelArtifact::Esn(EsnArtifact { params: params.clone(), w_out: w.iter().copied().collect() });
    let train_rmse = artifact.evaluate(ds)?;
    Ok(TrainOutcome { artifact, cv, train_rmse })
}

pub fn train_model(kind: ModelKind, ds: &Dataset, cfg: &ModelConfig, seed: u64) -> Result<TrainOutcome> {
    match kind {
        ModelKind::Esn => {
            let mut p = cfg.esn.clone();
            p.seed = seed;
            train_esn(ds, &p, cfg.folds)
        }
        ModelKind::Fprc | ModelKind::FuzzyLinear => {
            train_fuzzy(ds, &cfg.fprc, &cfg.reservoir, feature_set(kind), cfg.folds, seed)
        }
    }
}

/// Fit the FPRC rule base on min-max normalized angle and filtered pressure
/// over the whole training set and report the weight shares.
pub fn weight_analysis(ds: &Dataset, params: &FprcParams, seed: u64) -> Result<WeightReport> {
    let (x, y, _) = collect_training_normalized(&ds.theta, &ds.p_exp, &ds.p_o, params)?;
    let (rules, _) = FuzzyRuleSet::train(&x, &y, &params.fuzzy, seed)?;
    weight_contributions(&rules, params.n_y, params.n_u)
}

/// One column of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: ModelKind,
    pub e_train: f64,
    pub e_val: f64,
    pub e_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub model: ModelKind,
    pub train: TimingStats,
    pub test: TimingStats,
}

/// Model comparison: errors are reproducible, timings are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scores: Vec<ModelScores>,
    #[serde(skip)]
    pub timings: Vec<ModelTiming>,
}

fn table_csv(header: &[String], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    crate::training::finish_csv(w)
}

impl Comparison {
    fn header(&self, first: &str) -> Vec<String> {
        std::iter::once(first.to_string()).chain(self.scores.iter().map(|s| s.model.label().to_string())).collect()
    }

    /// Rows are metrics, columns are models.
    pub fn to_csv(&self) -> Result<String> {
        let row = |name: &str, f: fn(&ModelScores) -> f64| {
            std::iter::once(name.to_string()).chain(self.scores.iter().map(|s| f(s).to_string())).collect()
        };
        table_csv(
            &self.header("metric"),
            vec![
                row("Train RMSE [kPa]", |s| s.e_train),
                row("Validation RMSE [kPa]", |s| s.e_val),
                row("Test RMSE [kPa]", |s| s.e_test),
            ],
        )
    }

    pub fn timings_csv(&self) -> Result<String> {
        let row = |name: &str, f: fn(&ModelTiming) -> String| {
            std::iter::once(name.to_string()).chain(self.timings.iter().map(f)).collect()
        };
        table_csv(
            &self.header("metric"),
            vec![
                row("Train time [ms]", |t| t.train.display()),
                row("Test time [ms]", |t| t.test.display()),
                row("Test time per step [us]", |t| format!("{:.3}", t.test.per_step_us())),
            ],
        )
    }
}

/// Train and test each model, timing both phases over `repetitions` runs.
/// `train_repetitions` may be lower than `repetitions` to bound the cost of
/// retraining the ESN.
pub fn compare_models(
    kinds: &[ModelKind],
    train: &Dataset,
    test: &Dataset,
    cfg: &ModelConfig,
    seed: u64,
    repetitions: usize,
    train_repetitions: usize,
) -> Result<Comparison> {
    let mut scores = Vec::new();
    let mut timings = Vec::new();
    for &kind in kinds {
        let start = Instant::now();
        let outcome = train_model(kind, train, cfg, seed)?;
        let first_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut train_samples = vec![first_ms];
        for _ in 1..train_repetitions.max(1) {
            let s = Instant::now();
            train_model(kind, train, cfg, seed)?;
            train_samples.push(s.elapsed().as_secs_f64() * 1e3);
        }
        let test_time = benchmark_execution(test.len(), repetitions, || outcome.artifact.run_inference(test).map(|_| ()))?;
        let best = outcome.cv.best();
        scores.push(ModelScores {
            model: kind,
            e_train: best.e_train,
            e_val: best.e_val,
            e_test: outcome.artifact.evaluate(test)?,
        });
        timings.push(ModelTiming {
            model: kind,
            train: TimingStats::from_samples(train_samples, train.len()),
            test: test_time,
        });
    }
    Ok(Comparison { scores, timings })
}

/// Sweep one FPRC hyperparameter, training each cell on `train` and
/// scoring it on `test`.
pub fn sweep_fprc(axis: &SweepAxis, train: &Dataset, test: &Dataset, cfg: &ModelConfig, seed: u64) -> Result<SweepResult> {
    run_sweep(axis, &cfg.fprc, |params| {
        let start = Instant::now();
        let outcome = train_fuzzy(train, params, &cfg.reservoir, FeatureSet::Reservoir, cfg.folds, seed)?;
        let train_ms = start.elapsed().as_secs_f64() * 1e3;
        let start = Instant::now();
        let e_test = outcome.artifact.evaluate(test)?;
        let test_ms = start.elapsed().as_secs_f64() * 1e3;
        let best = outcome.cv.best();
        Ok((CellMetrics { e_train: best.e_train, e_val: best.e_val, e_test }, CellTiming { train_ms, test_ms }))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{simulate_experiment, SensorNoise};
    use crate::fuzzy::FuzzyParams;
    use crate::plant::ActuatorParams;
    use crate::signals::{gen_sweep_frequency, Unit};

    fn data(seconds: f64, seed: u64) -> Dataset {
        let p = gen_sweep_frequency(0.1, 1.0, 175.0, 175.0, seconds, 0.005, Unit::KPa).unwrap();
        simulate_experiment(&p, &ActuatorParams::default(), &ReservoirParams::default(), 7.0, SensorNoise::default(), seed)
            .unwrap()
    }

    fn small_fprc() -> FprcParams {
        FprcParams { fuzzy: FuzzyParams { clusters: 3, ..FuzzyParams::default() }, ..FprcParams::default() }
    }

    #[test]
    fn fuzzy_training_is_consistent() {
        let ds = data(20.0, 1);
        let out = train_fuzzy(&ds, &small_fprc(), &ReservoirParams::default(), FeatureSet::Reservoir, 5, 7).unwrap();
        assert_eq!(out.cv.folds.len(), 5);
        assert_eq!(out.artifact.weight_count(), 3 * 9);
        assert!((out.artifact.evaluate(&ds).unwrap() - out.train_rmse).abs() < 1e-9);
        let again = train_fuzzy(&ds, &small_fprc(), &ReservoirParams::default(), FeatureSet::Reservoir, 5, 7).unwrap();
        assert_eq!(out.artifact, again.artifact);
    }

    #[test]
    fn step_inference_matches_batch_prediction() {
        let ds = data(10.0, 2);
        let out = train_fuzzy(&ds, &small_fprc(), &ReservoirParams::default(), FeatureSet::Reservoir, 5, 1).unwrap();
        let (batch, _) = out.artifact.predict(&ds).unwrap();
        let live = out.artifact.run_inference(&ds).unwrap();
        for (a, b) in batch.iter().zip(&live) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn esn_cv_sse_matches_direct_residuals() {
        let ds = data(6.0, 3);
        let params = EsnParams { reservoir_size: 40, ..EsnParams::default() };
        let out = train_esn(&ds, &params, 5).unwrap();
        assert_eq!(out.artifact.weight_count(), 46);
        // Validation error of the selected fold recomputed from scratch.
        let folds = contiguous_folds(ds.len(), 5).unwrap();
        let block = ds.slice(folds[out.cv.best_fold].clone());
        let direct = out.artifact.evaluate(&block).unwrap();
        assert!((direct - out.cv.best().e_val).abs() < 1e-6 * direct.max(1.0), "{direct} vs {}", out.cv.best().e_val);
        let json = out.artifact.to_json().unwrap();
        assert_eq!(ModelArtifact::from_json(&json).unwrap(), out.artifact);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("fuzzy-linear".parse::<ModelKind>().unwrap(), ModelKind::FuzzyLinear);
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
