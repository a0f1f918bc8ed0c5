use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::env::{EnvConfig, ReferenceTrajectory, RewardConfig};
use crate::skeleton::ModelSpec;
use crate::{Error, Result};

/// One training run: data files, hyperparameters and budget.
///
/// `model` and `reference` are resolved relative to the directory of the
/// config file when loaded with [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub total_env_steps: u64,
    /// Iterations between checkpoints (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Iterations between deterministic evaluations recorded in the metrics (0: never).
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "one")]
    pub eval_episodes: usize,
    /// Output directory; relative paths resolve against the config directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse(base_dir.join("<experiment>"), e))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.base_dir = base;
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn absolute(p: PathBuf) -> PathBuf {
        std::path::absolute(&p).unwrap_or(p)
    }

    pub fn model_path(&self) -> PathBuf {
        self.resolve(&self.model)
    }

    pub fn reference_path(&self) -> PathBuf {
        self.resolve(&self.reference)
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_deref().map(|p| self.resolve(p))
    }

    /// Copy with `model` and `reference` made absolute and the output cleared,
    /// suitable for writing next to run artifacts.
    pub fn snapshot(&self) -> Self {
        let mut c = self.clone();
        c.model = Self::absolute(self.model_path());
        c.reference = Self::absolute(self.reference_path());
        c.output = None;
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize experiment config: {e}")))
    }

    pub fn load_model(&self) -> Result<ModelSpec> {
        ModelSpec::load(self.model_path())
    }

    pub fn load_reference(&self, spec: &ModelSpec) -> Result<ReferenceTrajectory> {
        ReferenceTrajectory::load(spec, &self.reference_path())
    }

    /// Checks every section; loads the model and reference to check them too.
    pub fn validate(&self) -> Result<(ModelSpec, ReferenceTrajectory)> {
        self.train.validate()?;
        self.env.validate()?;
        if self.total_env_steps == 0 {
            return Err(Error::Config("total_env_steps must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        for p in [self.model_path(), self.reference_path()] {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        let spec = self.load_model()?;
        let reference = self.load_reference(&spec)?;
        self.reward.validate(spec.n_muscles(), reference.n_emg())?;
        Ok((spec, reference))
    }
}
