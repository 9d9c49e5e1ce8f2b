//! Run configuration: one TOML file whose sections mirror the module
//! configs. Every key is optional and falls back to its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::{CurationConfig, DatasetCounts, Split};
use crate::eval::MIN_TTC_EDGES;
use crate::planners::{CarFollowerConfig, OracleConfig};
use crate::sim::SimConfig;
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub seed: u64,
    pub scale: f64,
    pub counts: DatasetCounts,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { seed: 0, scale: 1.0, counts: DatasetCounts::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub noise_p: f64,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seeds: vec![0, 1, 2, 3], noise_p: 0.0, split: Split::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    /// Arrival-offset grid of the perturbation study, in seconds.
    pub offset_min: f64,
    pub offset_max: f64,
    pub offset_step: f64,
    pub episodes_per_offset: usize,
    /// Min-TTC bin edges in seconds.
    pub ttc_edges: Vec<f64>,
    /// Highly interactive steps of the counterfactual log, in seconds.
    pub ttc_threshold: f64,
    pub betas: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 0,
            offset_min: -2.0,
            offset_max: 2.0,
            offset_step: 0.1,
            episodes_per_offset: 20,
            ttc_edges: MIN_TTC_EDGES.to_vec(),
            ttc_threshold: 1.0,
            betas: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Map file; the built-in map when absent.
    pub map: Option<PathBuf>,
    /// Seed of network initialisation and exploration.
    pub seed: u64,
    pub sim: SimConfig,
    pub oracle: OracleConfig,
    pub car_follower: CarFollowerConfig,
    pub curation: CurationConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        let s = &self.sim;
        if !(s.dt > 0.0 && s.footprint_length > 0.0 && s.footprint_width > 0.0 && s.observation_radius > 0.0) {
            return bad("sim.dt, footprint and observation_radius must be positive");
        }
        if s.t_max == 0 || s.ttc_horizon == 0 || self.oracle.ttc_horizon == 0 {
            return bad("t_max and TTC horizons must be positive");
        }
        if !(self.data.scale > 0.0) {
            return bad("data.scale must be positive");
        }
        if self.eval.seeds.is_empty() {
            return bad("eval.seeds is empty");
        }
        if !(0.0..=1.0).contains(&self.eval.noise_p) {
            return bad("eval.noise_p must lie in [0, 1]");
        }
        let a = &self.analysis;
        if !(a.offset_step > 0.0 && a.offset_min <= a.offset_max) || a.episodes_per_offset == 0 {
            return bad("analysis offset grid is empty");
        }
        if a.ttc_edges.is_empty() || a.ttc_edges.windows(2).any(|w| w[0] >= w[1]) || a.ttc_edges[0] != 0.0 {
            return bad("analysis.ttc_edges must start at 0 and increase");
        }
        if a.betas.is_empty() || a.betas.iter().any(|b| !(-1.0..=1.0).contains(b)) {
            return bad("analysis.betas must be nonempty and within [-1, 1]");
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
