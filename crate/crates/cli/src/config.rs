use std::path::Path;

use relvm::corpus::{PairSplitConfig, SyntheticSpec};
use relvm::mention::MentionConfig;
use relvm::model::ReprConfig;
use relvm::pair::{AttentionConfig, PairConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Vocabulary settings for `prepare-data`. The entity mode comes from
/// `repr.mode`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub min_count: usize,
    pub max_vocab: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            min_count: 1,
            max_vocab: 50_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossValidationConfig {
    pub folds: usize,
}

impl Default for CrossValidationConfig {
    fn default() -> Self {
        CrossValidationConfig { folds: 10 }
    }
}

/// Every setting of every command. Missing sections take their defaults;
/// unknown keys are an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synthetic: SyntheticSpec,
    pub repr: ReprConfig,
    pub mention: MentionConfig,
    pub cross_validation: CrossValidationConfig,
    pub split: PairSplitConfig,
    pub pair: PairConfig,
    pub attention: AttentionConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        Ok(config)
    }

    /// Writes the resolved configuration as `config.toml` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialise config: {e}")))?;
        std::fs::write(dir.join("config.toml"), text)?;
        Ok(())
    }
}
