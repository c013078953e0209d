//! The JSON run file read by `mmctr train --config`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mmctr_core::{ModelConfig, OptimizerConfig, TrainConfig};
use serde::Deserialize;

/// Training settings plus the files they apply to. Relative paths are
/// resolved against the directory holding the run file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub eval_data: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default = "yes")]
    pub deterministic: bool,
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl RunConfigFile {
    /// Parses and validates `text`; errors name the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("invalid config at `{path}`: {}", e.into_inner())
        })?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.eval_data, &mut cfg.checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            model: self.model.clone(),
            eval_every: self.eval_every,
            deterministic: self.deterministic,
        }
    }
}
