use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::Result;
use crate::nn::{Gradients, ParamGroup, ParamStore};

/// Adam with one learning rate for base parameters and another for LoRA
/// factors. Frozen parameters are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, base_lr: f64, lora_lr: f64) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in store.iter_mut() {
            if p.frozen {
                continue;
            }
            let Some(g) = grads.get(name) else { continue };
            let lr = match p.group {
                ParamGroup::Base => base_lr,
                ParamGroup::Lora => lora_lr,
            };
            let m = self.m.entry(name.to_string()).or_insert_with(|| Array2::zeros(g.dim()));
            let v = self.v.entry(name.to_string()).or_insert_with(|| Array2::zeros(g.dim()));
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
        }
        Ok(())
    }
}
