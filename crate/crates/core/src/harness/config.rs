//! TOML run configuration with one flat section per module.
//!
//! Any key can be overridden from the environment as
//! `PROTOMAP_<SECTION>_<KEY>`, e.g. `PROTOMAP_ADPEN_EPOCHS=50`. Override
//! values are read as TOML literals and fall back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::task::Task;
use super::HarnessError;
use crate::adpen::{AdpenConfig, OrderingConfig, OrderingForm, Topology, VaeConfig};
use crate::autodiff::AdamConfig;
use crate::cohort::SyntheticSpec;
use crate::likelihood::{CaeConfig, EstimatorConfig, Temperature};

pub const ENV_PREFIX: &str = "PROTOMAP_";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub cohort: SyntheticSpec,
    pub adpen: AdpenSection,
    pub cae: CaeSection,
    pub estimator: EstimatorSection,
    pub explain: ExplainSection,
    pub optimizer: OptimizerSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub folds: usize,
    /// Split used by the single-split stage commands.
    pub fold: usize,
    pub tasks: Vec<Task>,
    pub output_dir: PathBuf,
    /// Read the cohort from NDJSON instead of generating it.
    pub cohort_path: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: 5,
            fold: 0,
            tasks: vec![Task::CnAd, Task::Stages, Task::Mmse],
            output_dir: PathBuf::from("protomap-out"),
            cohort_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdpenSection {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// One entry per axis: `[len]`, `[rows, cols]` or `[depth, rows, cols]`.
    pub topology: Vec<usize>,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub lambda_som: f64,
    pub gamma_max: Option<f64>,
    pub gamma_min: f64,
    pub ordering: OrderingForm,
    pub detach_distance: bool,
    pub finetune_epochs: usize,
    pub finetune_learning_rate: f64,
    pub finetune_gamma_max: f64,
}

impl Default for AdpenSection {
    fn default() -> Self {
        let d = AdpenConfig::default();
        Self {
            hidden: d.vae.hidden,
            latent_dim: d.vae.latent_dim,
            topology: d.topology.dims(),
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            learning_rate: d.learning_rate,
            lambda_som: d.lambda_som,
            gamma_max: d.gamma_max,
            gamma_min: d.gamma_min,
            ordering: d.ordering.form,
            detach_distance: d.ordering.detach_distance,
            finetune_epochs: d.finetune_epochs,
            finetune_learning_rate: d.finetune_learning_rate,
            finetune_gamma_max: d.finetune_gamma_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeSection {
    pub hidden: usize,
    pub code_dim: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
}

impl Default for CaeSection {
    fn default() -> Self {
        let d = CaeConfig::default();
        Self {
            hidden: d.hidden,
            code_dim: d.code_dim,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            learning_rate: d.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub extractor_hidden: usize,
    pub feature_dim: usize,
    pub estimator_hidden: usize,
    pub task_hidden: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: Option<f64>,
    pub classification_learning_rate: f64,
    pub regression_learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_interval: usize,
    pub lambda_cons: f64,
    pub lambda_task: f64,
    /// Fixed softmax temperature for pseudo maps; unset uses the
    /// per-sample distance spread.
    pub temperature: Option<f64>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        Self {
            extractor_hidden: d.extractor_hidden,
            feature_dim: d.feature_dim,
            estimator_hidden: d.estimator_hidden,
            task_hidden: d.task_hidden,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            learning_rate: d.learning_rate,
            classification_learning_rate: d.classification_learning_rate,
            regression_learning_rate: d.regression_learning_rate,
            lr_decay: d.lr_decay,
            lr_decay_interval: d.lr_decay_interval,
            lambda_cons: d.lambda_cons,
            lambda_task: d.lambda_task,
            temperature: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// Row of the held-out split to explain.
    pub sample: usize,
    pub neighbours: usize,
    pub per_stage: usize,
    /// Years; defaults to the query sample's own age.
    pub query_age: Option<f64>,
    /// Absolute threshold; unset uses the 60th percentile of differences.
    pub threshold: Option<f64>,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            sample: 0,
            neighbours: 3,
            per_stage: 3,
            query_age: None,
            threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = AdamConfig::default();
        Self {
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            clip_norm: d.clip_norm,
        }
    }
}

pub fn topology_from_dims(dims: &[usize]) -> Result<Topology, HarnessError> {
    match *dims {
        [len] => Ok(Topology::Chain { len }),
        [rows, cols] => Ok(Topology::Grid2d { rows, cols }),
        [depth, rows, cols] => Ok(Topology::Grid3d { depth, rows, cols }),
        _ => Err(HarnessError::Config(format!("topology needs 1 to 3 axes, got {dims:?}"))),
    }
}

fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parses `text`, applies `PROTOMAP_*` entries from `env`, then validates.
    pub fn from_toml(
        text: &str,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, HarnessError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
            let Some((section, field)) = rest.split_once('_') else {
                return Err(HarnessError::Config(format!("override {key} names no key")));
            };
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(section_table) = entry else {
                return Err(HarnessError::Config(format!("{section} is not a section")));
            };
            section_table.insert(field.to_string(), parse_override(&raw));
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, applying overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.run.folds < 2 {
            return Err(HarnessError::Config("run.folds must be at least 2".into()));
        }
        if self.run.fold >= self.run.folds {
            return Err(HarnessError::Config(format!(
                "run.fold {} out of range for {} folds",
                self.run.fold, self.run.folds
            )));
        }
        if self.run.tasks.is_empty() {
            return Err(HarnessError::Config("run.tasks is empty".into()));
        }
        let topology = topology_from_dims(&self.adpen.topology)?;
        topology.validate()?;
        self.cae_config(0)
            .validate(topology.size())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if matches!(self.estimator.temperature, Some(t) if !(t > 0.0)) {
            return Err(HarnessError::Config("estimator.temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            epsilon: self.optimizer.epsilon,
            clip_norm: self.optimizer.clip_norm,
        }
    }

    pub fn adpen_config(&self, num_stages: usize, seed: u64) -> Result<AdpenConfig, HarnessError> {
        let a = &self.adpen;
        Ok(AdpenConfig {
            vae: VaeConfig {
                num_stages,
                hidden: a.hidden.clone(),
                latent_dim: a.latent_dim,
            },
            topology: topology_from_dims(&a.topology)?,
            epochs: a.epochs,
            batches_per_epoch: a.batches_per_epoch,
            learning_rate: a.learning_rate,
            lambda_som: a.lambda_som,
            gamma_max: a.gamma_max,
            gamma_min: a.gamma_min,
            ordering: OrderingConfig {
                form: a.ordering,
                detach_distance: a.detach_distance,
            },
            adam: self.adam(),
            finetune_epochs: a.finetune_epochs,
            finetune_learning_rate: a.finetune_learning_rate,
            finetune_gamma_max: a.finetune_gamma_max,
            seed,
        })
    }

    pub fn cae_config(&self, seed: u64) -> CaeConfig {
        CaeConfig {
            hidden: self.cae.hidden,
            code_dim: self.cae.code_dim,
            epochs: self.cae.epochs,
            batches_per_epoch: self.cae.batches_per_epoch,
            learning_rate: self.cae.learning_rate,
            adam: self.adam(),
            seed,
        }
    }

    pub fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        let e = &self.estimator;
        EstimatorConfig {
            extractor_hidden: e.extractor_hidden,
            feature_dim: e.feature_dim,
            estimator_hidden: e.estimator_hidden,
            task_hidden: e.task_hidden,
            epochs: e.epochs,
            batches_per_epoch: e.batches_per_epoch,
            learning_rate: e.learning_rate,
            classification_learning_rate: e.classification_learning_rate,
            regression_learning_rate: e.regression_learning_rate,
            lr_decay: e.lr_decay,
            lr_decay_interval: e.lr_decay_interval,
            lambda_cons: e.lambda_cons,
            lambda_task: e.lambda_task,
            adam: self.adam(),
            seed,
        }
    }

    pub fn temperature(&self) -> Temperature {
        match self.estimator.temperature {
            Some(gamma) => Temperature::Fixed { gamma },
            None => Temperature::Variance,
        }
    }
}
