//! Single TOML configuration holding every tunable. Every section is optional
//! and falls back to its defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev::{BevConfig, GridMaskConfig};
use crate::decoder::{DecoderConfig, TrainOptions};
use crate::epdms::MetricConfig;
use crate::error::{Error, Result};
use crate::mining::MiningConfig;
use crate::postproc::PostprocConfig;
use crate::scene::Horizon;
use crate::scorer::ScorerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorSettings {
    /// Number of anchors, which is also the number of candidates per scene.
    pub count: usize,
    pub seed: u64,
}

impl Default for AnchorSettings {
    fn default() -> Self {
        Self { count: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub decoder_lr: f64,
    pub scorer_lr: f64,
    pub seed: u64,
    /// Cap on SGD steps per stage; zero means no cap.
    pub max_steps: usize,
    pub grid_mask_probability: f64,
    /// Upsample hard cases in the training schedule.
    pub mining: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 30,
            decoder_lr: 0.02,
            scorer_lr: 0.02,
            seed: 0,
            max_steps: 0,
            grid_mask_probability: 0.5,
            mining: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSettings {
    /// Seed of the uniform selection used when the scorer is disabled.
    pub seed: u64,
    pub use_scorer: bool,
    pub use_postproc: bool,
    /// Number of decoder layers to run; zero means all.
    pub layers: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            use_scorer: true,
            use_postproc: true,
            layers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSettings {
    pub count: usize,
    pub seed: u64,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self { count: 120, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub horizon: Horizon,
    pub bev: BevConfig,
    pub grid_mask: GridMaskConfig,
    pub anchors: AnchorSettings,
    pub decoder: DecoderConfig,
    pub scorer: ScorerConfig,
    pub metrics: MetricConfig,
    pub postproc: PostprocConfig,
    pub mining: MiningConfig,
    pub train: TrainSettings,
    pub evaluate: EvaluateSettings,
    pub synthetic: SyntheticSettings,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        self.bev.validate()?;
        self.grid_mask.validate()?;
        self.decoder.validate()?;
        self.scorer.validate()?;
        self.metrics.validate()?;
        self.postproc.validate()?;
        self.mining.validate()?;
        if self.anchors.count == 0 {
            return Err(Error::Config("anchors.count must be at least 1".into()));
        }
        let t = &self.train;
        if !(t.decoder_lr > 0.0 && t.scorer_lr > 0.0 && t.decoder_lr.is_finite() && t.scorer_lr.is_finite()) {
            return Err(Error::Config("train learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.grid_mask_probability) {
            return Err(Error::Config("train.grid_mask_probability must be in [0, 1]".into()));
        }
        if self.evaluate.layers > self.decoder.layers {
            return Err(Error::Config(format!(
                "evaluate.layers = {} exceeds decoder.layers = {}",
                self.evaluate.layers, self.decoder.layers
            )));
        }
        Ok(())
    }

    fn train_options(&self, lr: f64) -> TrainOptions {
        TrainOptions {
            epochs: self.train.epochs,
            lr,
            seed: self.train.seed,
            max_steps: (self.train.max_steps > 0).then_some(self.train.max_steps),
            grid_mask_probability: self.train.grid_mask_probability,
            grid_mask: self.grid_mask,
        }
    }

    pub fn decoder_train_options(&self) -> TrainOptions {
        self.train_options(self.train.decoder_lr)
    }

    pub fn scorer_train_options(&self) -> TrainOptions {
        let mut o = self.train_options(self.train.scorer_lr);
        o.seed = self.train.seed.wrapping_add(1);
        o
    }
}
