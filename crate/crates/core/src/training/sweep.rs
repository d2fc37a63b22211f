//! One-axis-at-a-time parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fprc::FprcParams;

use super::finish_csv;

/// The swept parameter and its values; everything else stays at the base
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "kebab-case")]
pub enum SweepAxis {
    Epsilon { values: Vec<f64> },
    Clusters { values: Vec<usize> },
    /// Full grid over reservoir taps × reference taps.
    Taps { n_u: Vec<usize>, n_y: Vec<usize> },
}

impl SweepAxis {
    pub fn epsilon_default() -> Self {
        Self::Epsilon { values: vec![1.0, 0.1, 0.01, 1e-3, 1e-4] }
    }

    pub fn clusters_default() -> Self {
        Self::Clusters { values: vec![1, 2, 4, 8, 16] }
    }

    pub fn taps_default() -> Self {
        Self::Taps { n_u: (1..=10).collect(), n_y: (1..=10).collect() }
    }

    /// Default axis by name: `epsilon`, `clusters` or `taps`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "epsilon" => Ok(Self::epsilon_default()),
            "clusters" => Ok(Self::clusters_default()),
            "taps" => Ok(Self::taps_default()),
            other => Err(Error::InvalidSpec(format!("unknown sweep axis '{other}' (expected epsilon, clusters or taps)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Epsilon { .. } => "epsilon",
            Self::Clusters { .. } => "clusters",
            Self::Taps { .. } => "taps",
        }
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match self {
            Self::Epsilon { values } => values.iter().map(|v| SweepPoint::Epsilon(*v)).collect(),
            Self::Clusters { values } => values.iter().map(|v| SweepPoint::Clusters(*v)).collect(),
            Self::Taps { n_u, n_y } => n_u
                .iter()
                .flat_map(|u| n_y.iter().map(move |y| SweepPoint::Taps { n_u: *u, n_y: *y }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepPoint {
    Epsilon(f64),
    Clusters(usize),
    Taps { n_u: usize, n_y: usize },
}

impl SweepPoint {
    pub fn apply(&self, params: &mut FprcParams) {
        match *self {
            Self::Epsilon(e) => params.epsilon = e,
            Self::Clusters(c) => params.fuzzy.clusters = c,
            Self::Taps { n_u, n_y } => {
                params.n_u = n_u;
                params.n_y = n_y;
            }
        }
    }

    fn label(&self) -> [String; 2] {
        match *self {
            Self::Epsilon(e) => [e.to_string(), String::new()],
            Self::Clusters(c) => [c.to_string(), String::new()],
            Self::Taps { n_u, n_y } => [n_u.to_string(), n_y.to_string()],
        }
    }
}

/// Errors of one trained cell (kPa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub e_train: f64,
    pub e_val: f64,
    pub e_test: f64,
}

/// Wall-clock cost of one cell; kept apart from the reproducible metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub train_ms: f64,
    pub test_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub point: SweepPoint,
    pub metrics: Option<CellMetrics>,
    /// Failure message when the cell could not be trained or evaluated.
    pub error: Option<String>,
    #[serde(skip)]
    pub timing: Option<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    fn header(&self) -> [&'static str; 2] {
        match self.axis {
            SweepAxis::Epsilon { .. } => ["epsilon", ""],
            SweepAxis::Clusters { .. } => ["n_c", ""],
            SweepAxis::Taps { .. } => ["n_u", "n_y"],
        }
    }

    fn keys(&self, cell: &SweepCell) -> Vec<String> {
        let label = cell.point.label();
        if self.header()[1].is_empty() {
            vec![label[0].clone()]
        } else {
            label.to_vec()
        }
    }

    fn csv_header(&self, rest: &[&str]) -> Vec<String> {
        let h = self.header();
        h.iter().filter(|s| !s.is_empty()).chain(rest).map(|s| s.to_string()).collect()
    }

    /// Metrics table: one row per cell, failed cells with empty metrics.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header(&["e_train_kPa", "e_val_kPa", "e_test_kPa", "status"]))?;
        for c in &self.cells {
            let mut rec = self.keys(c);
            match (&c.metrics, &c.error) {
                (Some(m), _) => {
                    rec.extend([m.e_train.to_string(), m.e_val.to_string(), m.e_test.to_string(), "ok".into()])
                }
                (None, e) => rec.extend([
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {}", e.as_deref().unwrap_or("unknown")),
                ]),
            }
            w.write_record(rec)?;
        }
        finish_csv(w)
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header(&["train_ms", "test_ms"]))?;
        for c in &self.cells {
            let mut rec = self.keys(c);
            match c.timing {
                Some(t) => rec.extend([t.train_ms.to_string(), t.test_ms.to_string()]),
                None => rec.extend([String::new(), String::new()]),
            }
            w.write_record(rec)?;
        }
        finish_csv(w)
    }
}

/// Evaluate every cell of `axis` in parallel. `eval` receives the base
/// parameters with the cell's value applied. Failing cells are recorded and
/// the sweep continues.
pub fn run_sweep<F>(axis: &SweepAxis, base: &FprcParams, eval: F) -> Result<SweepResult>
where
    F: Fn(&FprcParams) -> Result<(CellMetrics, CellTiming)> + Sync,
{
    let points = axis.points();
    if points.is_empty() {
        return Err(Error::InvalidSpec(format!("sweep axis '{}' has no values", axis.name())));
    }
    let cells = points
        .par_iter()
        .map(|point| {
            let mut params = base.clone();
            point.apply(&mut params);
            let outcome = params.validate().and_then(|_| eval(&params));
            match outcome {
                Ok((m, t)) => SweepCell { point: *point, metrics: Some(m), error: None, timing: Some(t) },
                Err(e) => {
                    log::warn!("sweep cell {point:?} failed: {e}");
                    SweepCell { point: *point, metrics: None, error: Some(e.to_string()), timing: None }
                }
            }
        })
        .collect();
    Ok(SweepResult { axis: axis.clone(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(p: &FprcParams) -> Result<(CellMetrics, CellTiming)> {
        if p.fuzzy.clusters == 4 {
            return Err(Error::DegenerateClustering("planted".into()));
        }
        let e = p.epsilon + p.fuzzy.clusters as f64 + (p.n_u * 10 + p.n_y) as f64;
        Ok((CellMetrics { e_train: e, e_val: e, e_test: e }, CellTiming { train_ms: 1.0, test_ms: 1.0 }))
    }

    #[test]
    fn grid_sizes() {
        let base = FprcParams::default();
        assert_eq!(run_sweep(&SweepAxis::epsilon_default(), &base, fake).unwrap().cells.len(), 5);
        let taps = run_sweep(&SweepAxis::taps_default(), &base, fake).unwrap();
        assert_eq!(taps.cells.len(), 100);
        assert_eq!(taps.to_csv().unwrap().lines().count(), 101);
    }

    #[test]
    fn failures_are_recorded() {
        let r = run_sweep(&SweepAxis::clusters_default(), &FprcParams::default(), fake).unwrap();
        assert_eq!(r.cells.len(), 5);
        assert_eq!(r.failed(), 1);
        assert!(r.cells[2].error.as_deref().unwrap().contains("planted"));
        assert!(r.to_csv().unwrap().contains("failed"));
    }

    #[test]
    fn invalid_values_fail_the_cell_only() {
        let axis = SweepAxis::Epsilon { values: vec![0.5, 0.0] };
        let r = run_sweep(&axis, &FprcParams::default(), fake).unwrap();
        assert!(r.cells[0].metrics.is_some() && r.cells[1].error.is_some());
        assert!(run_sweep(&SweepAxis::Epsilon { values: vec![] }, &FprcParams::default(), fake).is_err());
    }

    #[test]
    fn order_is_stable() {
        let a = run_sweep(&SweepAxis::taps_default(), &FprcParams::default(), fake).unwrap();
        let b = run_sweep(&SweepAxis::taps_default(), &FprcParams::default(), fake).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert!(!serde_json::to_string(&a).unwrap().contains("train_ms"));
    }
}
