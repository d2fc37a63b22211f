//! Repeated wall-clock timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mean_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub sd_ms: f64,
    /// Steps processed per repetition.
    pub steps: usize,
}

impl TimingStats {
    pub fn from_samples(samples_ms: Vec<f64>, steps: usize) -> Self {
        let (mean_ms, sd_ms) = mean_std(&samples_ms);
        Self { samples_ms, mean_ms, sd_ms, steps }
    }

    /// Mean time per step in microseconds.
    pub fn per_step_us(&self) -> f64 {
        self.mean_ms * 1e3 / self.steps as f64
    }

    /// `mean±sd` in milliseconds.
    pub fn display(&self) -> String {
        format!("{:.2}±{:.2}", self.mean_ms, self.sd_ms)
    }
}

/// Time `run` (which processes `steps` samples) `repetitions` times.
pub fn benchmark_execution(steps: usize, repetitions: usize, mut run: impl FnMut() -> Result<()>) -> Result<TimingStats> {
    if steps == 0 {
        return Err(Error::InvalidData("cannot benchmark a zero-length series".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidSpec("repetitions must be >= 1".into()));
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(TimingStats::from_samples(samples, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_repetitions_ten_samples() {
        let mut calls = 0;
        let t = benchmark_execution(100, 10, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!((calls, t.samples_ms.len()), (10, 10));
        assert!(t.mean_ms >= 0.0 && t.sd_ms >= 0.0);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(benchmark_execution(0, 10, || Ok(())).is_err());
    }

    #[test]
    fn errors_propagate() {
        let r = benchmark_execution(1, 3, || Err(Error::Numeric("boom".into())));
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
