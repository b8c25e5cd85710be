//! Run configuration, read from TOML. Every section has defaults, so an
//! empty file is a valid configuration.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::plant::config::ACTION_DIM;
use crate::plant::PlantConfig;
use crate::prior::{PriorConfig, DEFAULT_RESOLUTION};
use crate::replay::{KernelSpec, Method, ReplayConfig};
use crate::rpnn::RpnnConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n_shots: usize,
    pub campaigns: u32,
    pub seed: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { n_shots: 300, campaigns: 4, seed: 20_240_917 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub var_target: f64,
    pub pressure_floor: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { var_target: 0.99, pressure_floor: crate::pipeline::summary::PRESSURE_FLOOR }
    }
}

/// Network and optimizer settings. `state_dim` is taken from the fitted
/// feature map, so it is not part of the section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpnnSection {
    pub encoder_widths: Vec<usize>,
    pub hidden: usize,
    pub decoder_widths: Vec<usize>,
    pub logvar_min: f64,
    pub logvar_max: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub grad_clip: f64,
    /// Train on at most this many sequences (every shot when absent).
    pub max_train_shots: Option<usize>,
    pub seed: u64,
}

impl Default for RpnnSection {
    fn default() -> Self {
        RpnnSection::from_config(&RpnnConfig::desk(1, ACTION_DIM), None, 7)
    }
}

impl RpnnSection {
    pub fn from_config(c: &RpnnConfig, max_train_shots: Option<usize>, seed: u64) -> Self {
        RpnnSection {
            encoder_widths: c.encoder_widths.clone(),
            hidden: c.hidden,
            decoder_widths: c.decoder_widths.clone(),
            logvar_min: c.logvar_min,
            logvar_max: c.logvar_max,
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            patience: c.patience,
            max_epochs: c.max_epochs,
            validation_fraction: c.validation_fraction,
            batch_size: c.batch_size,
            grad_clip: c.grad_clip,
            max_train_shots,
            seed,
        }
    }

    pub fn network(&self, state_dim: usize) -> RpnnConfig {
        RpnnConfig {
            state_dim,
            action_dim: ACTION_DIM,
            encoder_widths: self.encoder_widths.clone(),
            hidden: self.hidden,
            decoder_widths: self.decoder_widths.clone(),
            logvar_min: self.logvar_min,
            logvar_max: self.logvar_max,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            max_epochs: self.max_epochs,
            validation_fraction: self.validation_fraction,
            batch_size: self.batch_size,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestSection {
    #[serde(flatten)]
    pub config: ForestConfig,
    /// Keep every k-th labelled step when building the training rows.
    pub stride: usize,
    pub seed: u64,
}

impl Default for ForestSection {
    fn default() -> Self {
        ForestSection { config: ForestConfig::default(), stride: 1, seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSection {
    #[serde(flatten)]
    pub config: PriorConfig,
    pub resolution: usize,
    pub seed: u64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection { config: PriorConfig::default(), resolution: DEFAULT_RESOLUTION, seed: 13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplaySection {
    #[serde(flatten)]
    pub config: ReplayConfig,
    pub seeds: Vec<u64>,
    pub kernels: Vec<KernelSpec>,
    pub methods: Vec<Method>,
}

impl Default for ReplaySection {
    fn default() -> Self {
        ReplaySection {
            config: ReplayConfig::default(),
            seeds: (0..10).collect(),
            kernels: KernelSpec::suite_defaults(),
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: SocketAddr,
    pub static_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { bind: SocketAddr::from(([127, 0, 0, 1], 8080)), static_dir: None, data_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub corpus: CorpusSection,
    pub pipeline: PipelineSection,
    pub rpnn: RpnnSection,
    pub forest: ForestSection,
    pub prior: PriorSection,
    pub replay: ReplaySection,
    pub service: ServiceSection,
}

impl RunConfig {
    /// Desk-scale network and rollout counts, with the dynamics model
    /// trained on an evenly spread subset of shots for a bounded number of
    /// epochs so the whole reference run fits a single core.
    pub fn desk() -> Self {
        let mut c = RunConfig::default();
        let net = RpnnConfig { learning_rate: 1e-3, patience: 20, max_epochs: 100, ..RpnnConfig::desk(1, ACTION_DIM) };
        c.rpnn = RpnnSection::from_config(&net, Some(96), 7);
        c.forest.stride = 4;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if self.corpus.n_shots == 0 {
            return Err(Error::Config("corpus.n_shots must be at least 1".into()));
        }
        if !(self.pipeline.var_target > 0.0 && self.pipeline.var_target <= 1.0) {
            return Err(Error::Config("pipeline.var_target must lie in (0, 1]".into()));
        }
        self.rpnn.network(1).validate()?;
        if self.forest.stride == 0 {
            return Err(Error::Config("forest.stride must be at least 1".into()));
        }
        if self.prior.resolution == 0 {
            return Err(Error::Config("prior.resolution must be at least 1".into()));
        }
        if self.replay.config.steps == 0 || !(self.replay.config.epsilon > 0.0) {
            return Err(Error::Config("replay needs steps >= 1 and epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }
}
