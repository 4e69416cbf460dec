use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Base,
    Lora,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub frozen: bool,
    pub group: ParamGroup,
}

/// Low-rank adapter attached to a base weight `W (m×n)`: the effective weight
/// is `W + (alpha / rank) · B · A` with `B (m×r)` and `A (r×n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

pub fn lora_a_name(target: &str) -> String {
    format!("{target}.lora_a")
}

pub fn lora_b_name(target: &str) -> String {
    format!("{target}.lora_b")
}

/// Named parameter tensors, all stored as matrices (vectors are `1×n`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    adapters: BTreeMap<String, LoraAdapter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.params.insert(
            name.into(),
            Param {
                value,
                frozen: false,
                group: ParamGroup::Base,
            },
        );
    }

    pub fn insert_param(&mut self, name: impl Into<String>, param: Param) {
        self.params.insert(name.into(), param);
    }

    pub fn init_normal<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).expect("finite std");
        let value = Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng));
        self.insert(name, value);
    }

    pub fn init_const(&mut self, name: &str, rows: usize, cols: usize, value: f64) {
        self.insert(name, Array2::from_elem((rows, cols), value));
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Array2<f64>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Array2<f64>> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn adapter(&self, target: &str) -> Option<&LoraAdapter> {
        self.adapters.get(target)
    }

    pub fn adapters(&self) -> impl Iterator<Item = (&str, &LoraAdapter)> {
        self.adapters.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn set_adapter(&mut self, target: impl Into<String>, adapter: LoraAdapter) {
        self.adapters.insert(target.into(), adapter);
    }

    /// Effective weight including any LoRA delta.
    pub fn effective(&self, name: &str) -> Result<Array2<f64>> {
        let base = self.value(name)?;
        match self.adapters.get(name) {
            None => Ok(base.clone()),
            Some(ad) => {
                let a = self.value(&lora_a_name(name))?;
                let b = self.value(&lora_b_name(name))?;
                Ok(base + &(b.dot(a) * ad.scale()))
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .values()
            .all(|p| p.value.iter().all(|x| x.is_finite()))
    }
}

/// Glob match supporting `*` wildcards anywhere in the pattern.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let mut rest = name;
    let first = parts[0];
    if !rest.starts_with(first) {
        return false;
    }
    rest = &rest[first.len()..];
    let last = parts[parts.len() - 1];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    rest.len() >= last.len() && rest.ends_with(last)
}
