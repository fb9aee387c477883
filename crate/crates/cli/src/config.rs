use std::path::{Path, PathBuf};

use min2net::dataio::AugmentConfig;
use min2net::harness::{Scheme, TestSessionFilter, TrainConfig};
use min2net::model::Min2NetConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Model options not implied by the dataset (channels, samples and classes come from the data).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub latent: Option<usize>,
    pub margin: Option<f64>,
    pub beta_mse: Option<f64>,
    pub beta_triplet: Option<f64>,
    pub beta_ce: Option<f64>,
    pub mse_elementwise: Option<bool>,
}

impl ModelSection {
    pub fn resolve(&self, channels: usize, samples: usize, classes: usize) -> Min2NetConfig {
        let mut c = Min2NetConfig::new(channels, samples, classes);
        if let Some(z) = self.latent {
            c.latent = z;
        }
        if let Some(v) = self.margin {
            c.margin = v;
        }
        if let Some(v) = self.beta_mse {
            c.beta_mse = v;
        }
        if let Some(v) = self.beta_triplet {
            c.beta_triplet = v;
        }
        if let Some(v) = self.beta_ce {
            c.beta_ce = v;
        }
        if let Some(v) = self.mse_elementwise {
            c.mse_elementwise = v;
        }
        c
    }
}

/// The `--config` file of `run`. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    pub test_session: Option<TestSessionFilter>,
    pub inner_folds: Option<usize>,
    pub jobs: Option<usize>,
    pub save_checkpoints: Option<bool>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Flag, then `MIN2NET_SEED`, then the config file, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("MIN2NET_SEED") {
        return v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("MIN2NET_SEED=`{v}` is not an unsigned integer")));
    }
    Ok(file.unwrap_or(0))
}

/// Everything `run` ended up using, echoed next to the results.
#[derive(Debug, Serialize)]
pub struct ResolvedRun {
    pub seed: u64,
    pub scheme: Scheme,
    pub test_session: TestSessionFilter,
    pub inner_folds: usize,
    pub jobs: usize,
    pub save_checkpoints: bool,
    pub data: PathBuf,
    pub out: PathBuf,
    pub model: Min2NetConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
}
