//! Run configuration files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::equilibrium::EquilibriumConfig;
use crate::error::{Error, Result};
use crate::prior_fit::HyperFitConfig;
use crate::sampler::SamplerConfig;

/// Settings read from a TOML file. Every section is optional.
///
/// ```toml
/// [sampler]
/// n_steps = 2500
/// restarts = 5
/// ladder = { base = 1.05, count = 40 }
///
/// [prior_fit]
/// batch_size = 100000
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    pub prior_fit: HyperFitConfig,
    pub equilibrium: EquilibriumConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Sets every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampler.seed = seed;
        self.prior_fit.seed = seed;
        self.equilibrium.seed = seed;
        self
    }
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("configuration serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file() {
        let c =
            RunConfig::from_toml_str("[sampler]\nn_steps = 10\nladder = { count = 3 }\n").unwrap();
        assert_eq!(c.sampler.n_steps, 10);
        assert_eq!(c.sampler.ladder.count, 3);
        assert_eq!(c.sampler.ladder.base, 1.05);
        assert_eq!(c.prior_fit, HyperFitConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[sampler]\nn_step = 10\n").is_err());
        assert!(RunConfig::from_toml_str("[samplr]\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig::default().with_seed(1);
        assert_eq!(config_hash(&a), config_hash(&RunConfig::default()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
