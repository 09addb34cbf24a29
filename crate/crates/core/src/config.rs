//! The run configuration shared by all commands.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::builder::BuildConfig;
use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::layers::{LayerKind, ModelSpec, WeightSharing, DEFAULT_DROPOUT};
use crate::train::TrainConfig;

/// Architecture choices; input widths, classes and relations come from the
/// build configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: Vec<LayerKind>,
    pub hidden: usize,
    pub projection: Option<usize>,
    pub dropout: f64,
    pub weight_sharing: WeightSharing,
    pub self_loops_via_root: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: vec![LayerKind::EdgeConv, LayerKind::Rgcn],
            hidden: 128,
            projection: None,
            dropout: DEFAULT_DROPOUT,
            weight_sharing: WeightSharing::default(),
            self_loops_via_root: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, build: &BuildConfig) -> Result<ModelSpec> {
        let projection = match self.projection {
            None if !build.modalities.is_empty() => Some(self.hidden),
            p => p,
        };
        let base = ModelSpec::stack(
            &self.layers,
            build.dims,
            projection,
            self.hidden,
            build.num_classes,
            build.relations(),
        )?;
        let spec = ModelSpec::new(
            base.input_dims,
            base.projection,
            base.layers,
            base.num_classes,
            base.relations,
            self.weight_sharing,
        )?
        .with_dropout(self.dropout)
        .with_self_loops_via_root(self.self_loops_via_root);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub build: BuildConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::ingestion(path, "file", e.to_string()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::ingestion(path, "schema", e.to_string()))?;
        Ok(cfg)
    }

    /// The configuration a synthetic dataset implies for building graphs:
    /// widths and class count follow the generator.
    pub fn aligned_with_synthetic(mut self) -> Self {
        self.build.dims = self.synthetic.dims();
        self.build.num_classes = self.synthetic.num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.build.validate()?;
        self.train.validate()?;
        self.model.spec(&self.build)?;
        Ok(())
    }
}
