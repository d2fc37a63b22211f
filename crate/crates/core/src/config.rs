//! Declarative run configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{default_scenarios, ControllerGains, Scenario, SimulationSettings};
use crate::dataset::SensorNoise;
use crate::error::{Error, Result};
use crate::experiment::{ModelConfig, ModelKind};
use crate::plant::ActuatorParams;
use crate::signals::{SignalSpec, DEFAULT_DT};

/// Excitation profiles of the two hysteresis experiments [kPa].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsConfig {
    pub train: SignalSpec,
    pub test: SignalSpec,
}

impl Default for SignalsConfig {
    fn default() -> Self {
        Self {
            train: SignalSpec::ChirpLinear { f_start: 0.1, f_end: 1.0, amplitude: 225.0, offset: 225.0, duration: 120.0 },
            test: SignalSpec::Multisine {
                frequencies: vec![0.12, 0.04, 0.31, 0.29, 0.25],
                amplitude: 35.0,
                offset: 175.0,
                phase: -std::f64::consts::FRAC_PI_2,
                duration: 80.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Initial transient excluded from tracking metrics [s].
    pub settle: f64,
    pub gains: ControllerGains,
    pub scenarios: Vec<Scenario>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { settle: 2.0, gains: ControllerGains::default(), scenarios: default_scenarios() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed inference passes per model.
    pub repetitions: usize,
    /// Timed training passes per model.
    pub train_repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { repetitions: 10, train_repetitions: 1 }
    }
}

/// Input and output locations. Relative dataset and model paths resolve
/// against `out` when left unset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    TrainData,
    TestData,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dt: f64,
    /// Model used by `train`, `evaluate` and `simulate`.
    pub model: ModelKind,
    /// Swap the roles of the training and test datasets.
    pub reverse: bool,
    pub signals: SignalsConfig,
    pub actuator: ActuatorParams,
    pub noise: SensorNoise,
    pub models: ModelConfig,
    pub simulation: SimulationConfig,
    pub bench: BenchConfig,
    pub paths: PathsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: DEFAULT_DT,
            model: ModelKind::Fprc,
            reverse: false,
            signals: SignalsConfig::default(),
            actuator: ActuatorParams::default(),
            noise: SensorNoise::default(),
            models: ModelConfig::default(),
            simulation: SimulationConfig::default(),
            bench: BenchConfig::default(),
            paths: PathsConfig { out: PathBuf::from("out"), ..Default::default() },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSpec(format!("dt must be positive, got {}", self.dt)));
        }
        if self.models.folds < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 folds, got {}", self.models.folds)));
        }
        self.models.esn.validate()?;
        self.models.fprc.validate()?;
        self.actuator.build()?;
        self.models.reservoir.build()?;
        self.simulation.gains.validate()?;
        for s in &self.simulation.scenarios {
            if let Some(d) = &s.disturbance {
                d.validate()?;
            }
        }
        if self.bench.repetitions == 0 {
            return Err(Error::InvalidSpec("bench repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of one random stream; distinct streams never share a seed.
    pub fn seed_for(&self, stream: SeedStream) -> u64 {
        let tag = match stream {
            SeedStream::TrainData => 1,
            SeedStream::TestData => 2,
            SeedStream::Model => 3,
        };
        splitmix64(self.seed.wrapping_mul(4).wrapping_add(tag))
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            dt: self.dt,
            settle: self.simulation.settle,
            plant: self.actuator.clone(),
            gains: self.simulation.gains.clone(),
        }
    }

    /// Training and test dataset paths, after applying `reverse`.
    pub fn dataset_paths(&self) -> (PathBuf, PathBuf) {
        let train = self.paths.train.clone().unwrap_or_else(|| self.paths.out.join("train.csv"));
        let test = self.paths.test.clone().unwrap_or_else(|| self.paths.out.join("test.csv"));
        if self.reverse {
            (test, train)
        } else {
            (train, test)
        }
    }

    pub fn model_path(&self, kind: ModelKind) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.paths.out.join(format!("model_{}.json", kind.name())))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
