use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{glob_match, lora_a_name, lora_b_name};
use crate::nn::{LoraAdapter, Param, ParamGroup, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub enabled: bool,
    pub rank: usize,
    pub alpha: f64,
    /// Glob patterns over parameter names; each must match at least one
    /// weight matrix.
    pub targets: Vec<String>,
    pub init_std: f64,
    /// Freeze every non-LoRA parameter after wrapping.
    pub freeze_base: bool,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            enabled: true,
            rank: 4,
            alpha: 8.0,
            targets: vec!["*.wq".into(), "*.wv".into()],
            init_std: 0.01,
            freeze_base: false,
        }
    }
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("lora.rank must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("lora.alpha must be positive".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("lora.targets must not be empty".into()));
        }
        Ok(())
    }
}

fn is_lora_factor(name: &str) -> bool {
    name.ends_with(".lora_a") || name.ends_with(".lora_b")
}

/// Attaches adapters to every weight matching a target pattern. `B` starts
/// at zero and `A` from a seeded Gaussian, so the wrapped model computes
/// exactly what the unwrapped one did. Returns the adapted weight names.
pub fn lora_wrap<R: Rng>(store: &mut ParamStore, cfg: &LoraConfig, rng: &mut R) -> Result<Vec<String>> {
    cfg.validate()?;
    let mut targets = Vec::new();
    for pattern in &cfg.targets {
        let hits: Vec<String> = store
            .names()
            .filter(|n| !is_lora_factor(n) && glob_match(pattern, n))
            .map(str::to_string)
            .collect();
        if hits.is_empty() {
            return Err(Error::Config(format!("lora target {pattern:?} matches no parameter")));
        }
        for h in hits {
            if !targets.contains(&h) {
                targets.push(h);
            }
        }
    }
    targets.sort();
    for t in &targets {
        if store.adapter(t).is_some() {
            return Err(Error::Config(format!("{t} already carries an adapter")));
        }
        let (m, n) = store.value(t)?.dim();
        if m < 2 && n < 2 {
            return Err(Error::Config(format!("lora target {t} is not a weight matrix")));
        }
    }
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
    for t in &targets {
        let (m, n) = store.value(t)?.dim();
        let a = ndarray::Array2::from_shape_simple_fn((cfg.rank, n), || normal.sample(rng));
        let factor = |value| Param {
            value,
            frozen: false,
            group: ParamGroup::Lora,
        };
        store.insert_param(lora_a_name(t), factor(a));
        store.insert_param(lora_b_name(t), factor(ndarray::Array2::zeros((m, cfg.rank))));
        store.set_adapter(
            t.clone(),
            LoraAdapter {
                rank: cfg.rank,
                alpha: cfg.alpha,
            },
        );
    }
    if cfg.freeze_base {
        for (_, p) in store.iter_mut() {
            if p.group == ParamGroup::Base {
                p.frozen = true;
            }
        }
    }
    Ok(targets)
}
