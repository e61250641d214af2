//! TOML run configuration. Every key is optional; flags override it.

use std::path::{Path, PathBuf};

use asc_core::train::TrainConfig;
use asc_core::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: Option<String>,
    pub width_divisor: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
    pub folds_file: Option<PathBuf>,
    pub fold: Option<usize>,
    pub seed: Option<u64>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.context(path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let c = RunConfig::parse("topology = \"lcnn\"\n[train]\nbatch_size = 16\n").unwrap();
        assert_eq!(c.topology.as_deref(), Some("lcnn"));
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.train.max_epochs, 500);
        assert_eq!(c.train.lr0, 0.001);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("topolgy = \"vgg\"\n").is_err());
        assert!(RunConfig::parse("[train]\nlearning_rate = 0.1\n").is_err());
    }
}
