//! Pipeline configuration, loaded from and emitted as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationConfig;
use crate::depth::NoiseModel;
use crate::error::{Error, Result};
use crate::evaluate::ProposalConfig;
use crate::simplify::DEFAULT_KEEP_VIEWS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    /// Number of entries `K`.
    pub k: usize,
    pub alpha: f64,
    /// Feature dimension `C`.
    pub dim: usize,
    /// Attention width `D_m`.
    pub model_dim: usize,
    pub heads: usize,
    /// Neighborhood group size `G`.
    pub group: usize,
    /// Descriptors sampled per input cloud.
    pub samples: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            k: 120,
            alpha: 0.999,
            dim: 256,
            model_dim: 256,
            heads: 4,
            group: 16,
            samples: 1024,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.dim == 0 || self.model_dim == 0 || self.heads == 0 || self.samples == 0 {
            return Err(Error::invalid("bank sizes must be positive"));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::invalid("model_dim must be divisible by heads"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Sizes of the learned backbone, kept for parity with the reference
/// network. Nothing in this crate consumes them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub input_points: usize,
    pub seed_points: usize,
    pub feature_dim: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_points: 20000,
            seed_points: 1024,
            feature_dim: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage draws from [`stage_seed`].
    pub seed: u64,
    pub annotation: AnnotationConfig,
    pub keep_views: usize,
    /// Neighborhood radius for normals of observed clouds, meters.
    pub normal_radius: f64,
    pub bank: BankConfig,
    pub noise: NoiseModel,
    pub proposal: ProposalConfig,
    pub backbone: BackboneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            annotation: AnnotationConfig::default(),
            keep_views: DEFAULT_KEEP_VIEWS,
            normal_radius: 0.01,
            bank: BankConfig::default(),
            noise: NoiseModel::default(),
            proposal: ProposalConfig::default(),
            backbone: BackboneConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.annotation.validate()?;
        self.bank.validate()?;
        self.noise.validate()?;
        if self.keep_views == 0 {
            return Err(Error::invalid("keep_views must be at least 1"));
        }
        if self.proposal.top_m == 0 {
            return Err(Error::invalid("proposal.top_m must be at least 1"));
        }
        if !(self.normal_radius > 0.0 && self.normal_radius.is_finite()) {
            return Err(Error::invalid("normal_radius must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e.to_string()))
    }
}

/// Seed of one named stage, derived from the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name, mixed with the root by splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
