//! JSON run configuration. Every section is optional; command-line flags
//! override whatever is given here.

use anyhow::{Context, Result};
use serde::Deserialize;
use snmpp::{Homogeneous, Link, ModelSpec, PredictConfig, SupplyChainConfig, TrainConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub simulate: SimulateSection,
    pub model: ModelOverrides,
    /// Parsed into [`TrainConfig`] on demand so missing keys can be detected.
    pub train: Option<serde_json::Value>,
    pub predict: PredictConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateSection {
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub homogeneous: Option<Homogeneous>,
    pub supply_chain: Option<SupplyChainConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelOverrides {
    pub embedding_dim: Option<usize>,
    pub psi_hidden: Option<Vec<usize>>,
    pub phi_hidden: Option<Vec<usize>>,
    pub smoothness: Option<f64>,
    pub clip_bounds: Option<(f64, f64)>,
    pub link: Option<Link>,
}

impl ModelOverrides {
    pub fn resolve(&self, num_types: usize, default_link: Link) -> ModelSpec {
        let base = ModelSpec::new(num_types, self.link.unwrap_or(default_link));
        ModelSpec {
            embedding_dim: self.embedding_dim.unwrap_or(base.embedding_dim),
            psi_hidden: self.psi_hidden.clone().unwrap_or(base.psi_hidden.clone()),
            phi_hidden: self.phi_hidden.clone().unwrap_or(base.phi_hidden.clone()),
            smoothness: self.smoothness.unwrap_or(base.smoothness),
            clip_bounds: self.clip_bounds.unwrap_or(base.clip_bounds),
            ..base
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> Result<TrainConfig> {
        match &self.train {
            Some(v) => serde_json::from_value(v.clone()).context("parsing the train section"),
            None => Ok(TrainConfig::default()),
        }
    }

    pub fn sets_batch_size(&self) -> bool {
        self.train
            .as_ref()
            .and_then(|t| t.get("optimizer"))
            .and_then(|o| o.get("batch-size"))
            .is_some()
    }
}
