use std::path::{Path, PathBuf};

use glycocc::bench::{MlpConfig, Task, TrainConfig};
use glycocc::homp::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Message passing on the combinatorial complex.
    #[default]
    Complex,
    /// Morgan fingerprint MLP.
    FingerprintMlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    pub path: PathBuf,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proteins: Option<PathBuf>,
    /// Reused instead of drawing a random split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_file: Option<PathBuf>,
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_ood_threshold")]
    pub ood_threshold: f64,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

fn default_fractions() -> [f64; 3] {
    [0.7, 0.2, 0.1]
}

fn default_ood_threshold() -> f64 {
    0.75
}

fn default_run_name() -> String {
    "model".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model label in metric reports.
    #[serde(default = "default_run_name")]
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub architecture: Architecture,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
}

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        config.resolve()?;
        Ok(config)
    }

    /// Fills settings implied by others and checks the result.
    fn resolve(&mut self) -> Result<(), CliError> {
        self.model.head = self.data.task.head();
        if self.architecture == Architecture::Complex {
            self.model.validate()?;
            self.train.validate()?;
        }
        if !(self.data.ood_threshold.is_finite() && (0.0..=1.0).contains(&self.data.ood_threshold)) {
            return Err(CliError::user(format!(
                "data.ood_threshold must lie in [0, 1], got {}",
                self.data.ood_threshold
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("serializing config: {e}")))
    }
}
