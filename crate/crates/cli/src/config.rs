//! Run configuration: TOML sections merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use smartvl::caption::{CaptionConfig, DEFAULT_K};
use smartvl::decoder::{DecoderConfig, ModelConfig};
use smartvl::qformer::QFormerConfig;
use smartvl::router::RouterConfig;
use smartvl::trainer::{LoraConfig, TrainConfig};
use smartvl::vision::VisionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub captions: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data/synth".into(),
            captions: "runs/captions.jsonl".into(),
            checkpoints: "runs/checkpoints".into(),
            reports: "runs/reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerSection {
    pub backend: String,
    pub endpoint: Option<String>,
    pub k: usize,
    pub probes: Vec<String>,
    pub instruction: String,
}

impl Default for CaptionerSection {
    fn default() -> Self {
        let c = CaptionConfig::default();
        CaptionerSection {
            backend: "mock".into(),
            endpoint: None,
            k: DEFAULT_K,
            probes: c.probes,
            instruction: c.instruction,
        }
    }
}

impl CaptionerSection {
    pub fn caption_config(&self) -> CaptionConfig {
        CaptionConfig {
            k: self.k,
            probes: self.probes.clone(),
            instruction: self.instruction.clone(),
        }
    }
}

/// Held-out protocol for `train`, `infer` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Fraction of root puzzles held out as the test split.
    pub test_fraction: f64,
    /// Fraction of training-root instances used for checkpoint selection.
    pub validation_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: 0.25,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub vision: VisionConfig,
    pub qformer: QFormerConfig,
    pub decoder: DecoderConfig,
    pub router: RouterConfig,
    pub captioner: CaptionerSection,
    pub split: SplitSection,
    pub trainer: TrainConfig,
    pub lora: LoraConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies the `--seed` override. The trainer always uses the run seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.trainer.seed = self.seed;
        self
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            vision: self.vision.clone(),
            qformer: self.qformer.clone(),
            decoder: self.decoder.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        self.trainer.validate()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            bail!("split.test_fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.split.validation_fraction) {
            bail!("split.validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
