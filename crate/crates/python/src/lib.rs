//! Python bindings: run configuration, datasets, model training and
//! closed-loop simulation.

use std::path::PathBuf;

use fprc_core::config::{ExperimentConfig, SeedStream};
use fprc_core::control::{run_suite, summarize_run, tracking_report, ControllerMode, RunLog};
use fprc_core::dataset::{simulate_experiment, Dataset as CoreDataset};
use fprc_core::experiment::{train_model, ModelArtifact, ModelKind};
use fprc_core::signals::{SignalSpec, Unit};
use fprc_core::training::ridge_solve as core_ridge_solve;
use fprc_core::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Numeric(_) | Error::DegenerateClustering(_) | Error::DegenerateRange(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        Error::State(_) | Error::Resource(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for fprc_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Convert any serializable value into plain Python objects.
fn to_python<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_kind(kind: &str) -> PyResult<ModelKind> {
    kind.parse().py()
}

/// Full experiment configuration. Defaults reproduce the reference setup.
#[pyclass(name = "Config", module = "fprc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: ExperimentConfig::default() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_toml(text).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(&path).py()? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().py()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    /// Names of the configured control scenarios.
    #[getter]
    fn scenarios(&self) -> Vec<String> {
        self.inner.simulation.scenarios.iter().map(|s| s.name.clone()).collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, dt={}, model={})", self.inner.seed, self.inner.dt, self.inner.model.name())
    }
}

/// A recorded hysteresis experiment.
#[pyclass(name = "Dataset", module = "fprc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreDataset::load_csv(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }

    #[getter]
    fn p_exp(&self) -> Vec<f64> {
        self.inner.p_exp.clone()
    }

    #[getter]
    fn p_i(&self) -> Vec<f64> {
        self.inner.p_i.clone()
    }

    #[getter]
    fn p_o(&self) -> Vec<f64> {
        self.inner.p_o.clone()
    }

    fn slice(&self, start: usize, stop: usize) -> PyResult<Self> {
        if start >= stop || stop > self.inner.len() {
            return Err(PyValueError::new_err(format!("invalid range {start}..{stop} for {} rows", self.inner.len())));
        }
        Ok(Self { inner: self.inner.slice(start..stop) })
    }

    fn __repr__(&self) -> String {
        format!("Dataset(rows={}, dt={})", self.inner.len(), self.inner.dt)
    }
}

/// Simulate the training and test experiments of `config`.
#[pyfunction]
fn generate_datasets(py: Python<'_>, config: &PyConfig) -> PyResult<(PyDataset, PyDataset)> {
    let cfg = &config.inner;
    py.detach(|| {
        let run = |spec: &SignalSpec, stream| -> fprc_core::Result<CoreDataset> {
            let p = spec.generate(cfg.dt, Unit::KPa)?;
            simulate_experiment(&p, &cfg.actuator, &cfg.models.reservoir, cfg.models.fprc.k_in, cfg.noise, cfg.seed_for(stream))
        };
        let train = run(&cfg.signals.train, SeedStream::TrainData)?;
        let test = run(&cfg.signals.test, SeedStream::TestData)?;
        Ok((PyDataset { inner: train }, PyDataset { inner: test }))
    })
    .py()
}

/// A trained feedforward model: ESN, FPRC or fuzzy-linear.
#[pyclass(name = "Model", module = "fprc", skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelArtifact,
}

#[pymethods]
impl PyModel {
    /// Train with k-fold cross-validation. Returns the model and the CV report.
    #[staticmethod]
    #[pyo3(signature = (kind, dataset, config = None))]
    fn train(py: Python<'_>, kind: &str, dataset: &PyDataset, config: Option<&PyConfig>) -> PyResult<(Self, Py<PyAny>)> {
        let kind = parse_kind(kind)?;
        let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
        let outcome = py.detach(|| train_model(kind, &dataset.inner, &cfg.models, cfg.seed_for(SeedStream::Model))).py()?;
        let report = to_python(py, &outcome.cv)?;
        Ok((Self { inner: outcome.artifact }, report))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelArtifact::from_json(text).py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn weight_count(&self) -> usize {
        self.inner.weight_count()
    }

    /// Predicted and measured pressure over the scored rows [kPa].
    fn predict(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<(Vec<f64>, Vec<f64>)> {
        py.detach(|| self.inner.predict(&dataset.inner)).py()
    }

    /// RMSE against the recorded pressure [kPa].
    fn evaluate(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<f64> {
        py.detach(|| self.inner.evaluate(&dataset.inner)).py()
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, weights={})", self.inner.kind().name(), self.inner.weight_count())
    }
}

/// Run the control scenarios under FPRC, FPRC+PD and PD. Returns the
/// tracking report, per-run summaries and, per run, the logged columns.
#[pyfunction]
#[pyo3(signature = (model, config = None, scenarios = None))]
fn simulate(py: Python<'_>, model: &PyModel, config: Option<&PyConfig>, scenarios: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let mut selected = cfg.simulation.scenarios.clone();
    if let Some(names) = &scenarios {
        if let Some(bad) = names.iter().find(|n| !selected.iter().any(|s| &s.name == *n)) {
            return Err(PyValueError::new_err(format!("unknown scenario '{bad}'")));
        }
        selected.retain(|s| names.contains(&s.name));
    }
    let settings = cfg.simulation_settings();
    let kind = model.inner.kind();
    let runs = py.detach(|| run_suite(&selected, &ControllerMode::ALL, &model.inner, &settings));

    let mut ok: Vec<(String, ControllerMode, &RunLog)> = Vec::new();
    let mut summaries = Vec::new();
    let mut logs = Vec::new();
    for r in &runs {
        let log = r.result.as_ref().map_err(|e| PyRuntimeError::new_err(format!("{} aborted: {e}", r.scenario)))?;
        let label = r.mode.label(kind);
        summaries.push(summarize_run(&r.scenario, &label, log, settings.settle).py()?);
        logs.push(serde_json::json!({
            "scenario": r.scenario,
            "controller": label,
            "t": log.column(|x| x.t),
            "theta_d": log.column(|x| x.theta_d),
            "theta": log.column(|x| x.theta),
            "p_ff": log.column(|x| x.p_ff),
            "p_fb": log.column(|x| x.p_fb),
        }));
        ok.push((r.scenario.clone(), r.mode, log));
    }
    let names: Vec<String> = selected.iter().map(|s| s.name.clone()).collect();
    let report = tracking_report(&ok, &names, kind, settings.settle);
    to_python(py, &serde_json::json!({ "report": report, "runs": summaries, "logs": logs }))
}

/// Weighted ridge regression `(XᵀDX + αI) w = XᵀDy`.
#[pyfunction]
#[pyo3(signature = (x, y, alpha, weights = None))]
fn ridge_solve(x: Vec<Vec<f64>>, y: Vec<f64>, alpha: f64, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let cols = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows of x differ in length"));
    }
    let m = DMatrix::from_row_iterator(x.len(), cols, x.into_iter().flatten());
    Ok(core_ridge_solve(&m, &y, alpha, weights.as_deref()).py()?.iter().copied().collect())
}

/// Sample a signal described as a JSON object, e.g.
/// `{"kind": "sine", "freq": 0.5, "amplitude": 1, "offset": 0, "duration": 2}`.
#[pyfunction]
#[pyo3(signature = (spec, dt = 0.005))]
fn generate_signal(spec: &str, dt: f64) -> PyResult<Vec<f64>> {
    let spec: SignalSpec = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(spec.generate(dt, Unit::Deg).py()?.values)
}

#[pymodule]
pub fn fprc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_datasets, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ridge_solve, m)?)?;
    m.add_function(wrap_pyfunction!(generate_signal, m)?)?;
    Ok(())
}
