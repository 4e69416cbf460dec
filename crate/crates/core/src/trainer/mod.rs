//! Supervised training of the key and value specialists.

mod checkpoint;
mod lora;
mod optim;
mod sampler;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest,
    TensorEntry, MAGIC,
};
pub use lora::{lora_wrap, LoraConfig};
pub use optim::Adam;
pub use sampler::{MixedSampler, Source};

use crate::dataset::ExternalRecord;
use crate::decoder::{ModelAssembly, ModelConfig, ModelInput, Role};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Graph};
use crate::puzzle::{normalize_answer, AnswerKind, PuzzleInstance, SkillCategory};
use crate::tokenizer::encode_numeric_answer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub lora_lr: f64,
    pub batch_size: usize,
    pub epochs: f64,
    pub seed: u64,
    /// Fraction of every batch drawn from the additional datasets.
    pub mix_ratio: f64,
    /// Train on every category instead of only the role's own.
    pub all_categories: bool,
    /// Steps between validation passes; 0 means once per epoch.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-5,
            lora_lr: 1e-6,
            batch_size: 16,
            epochs: 2.0,
            seed: 0,
            mix_ratio: 0.0,
            all_categories: false,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !(self.lora_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.epochs > 0.0) || !self.epochs.is_finite() {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(Error::Config("mix_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub split: String,
    pub o_acc: f64,
    pub wosa: f64,
    /// Mean training loss since the previous record.
    pub loss: Option<f64>,
}

/// One supervised item, from the puzzle set or an additional dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub image: RgbImage,
    pub question: String,
    pub options: Vec<String>,
    pub caption: String,
    pub gold_option_index: usize,
    pub gold_answer: String,
    pub category: Option<SkillCategory>,
    pub weight: f64,
}

impl TrainExample {
    pub fn from_puzzle(p: &PuzzleInstance, caption: &str) -> Self {
        TrainExample {
            id: p.id.clone(),
            image: p.image.clone(),
            question: p.question.clone(),
            options: p.options.clone(),
            caption: caption.to_string(),
            gold_option_index: p.gold_option_index,
            gold_answer: p.gold_answer().to_string(),
            category: Some(p.category),
            weight: p.weight,
        }
    }

    /// Additional-data item; `None` unless the record is multiple choice.
    pub fn from_external(id: String, r: &ExternalRecord, image: RgbImage, caption: &str) -> Option<Self> {
        let answer = normalize_answer(&r.answer);
        let gold = r.options.iter().position(|o| normalize_answer(o) == answer)?;
        Some(TrainExample {
            id,
            image,
            question: r.question.clone(),
            options: r.options.clone(),
            caption: caption.to_string(),
            gold_option_index: gold,
            gold_answer: r.options[gold].clone(),
            category: None,
            weight: 1.0,
        })
    }

    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            image: &self.image,
            question: &self.question,
            options: &self.options,
            caption: &self.caption,
        }
    }

    /// Whether this item can supervise a model of `role`.
    pub fn usable_for(&self, role: Role) -> bool {
        match role {
            Role::KeyModel => self.gold_option_index < self.options.len().min(crate::puzzle::NUM_OPTIONS),
            Role::ValueModel => encode_numeric_answer(&self.gold_answer).is_some(),
        }
    }
}

pub fn role_kind(role: Role) -> AnswerKind {
    match role {
        Role::KeyModel => AnswerKind::Key,
        Role::ValueModel => AnswerKind::Value,
    }
}

/// Items of the role's categories (all categorized items when
/// `all_categories`), keeping only those the role can be supervised on.
pub fn filter_for_role(items: &[TrainExample], role: Role, all_categories: bool) -> Vec<TrainExample> {
    items
        .iter()
        .filter(|e| match e.category {
            Some(c) => all_categories || c.answer_kind() == role_kind(role),
            None => true,
        })
        .filter(|e| e.usable_for(role))
        .cloned()
        .collect()
}

pub fn example_loss(assembly: &ModelAssembly, g: &mut Graph, ex: &TrainExample) -> Result<crate::nn::NodeId> {
    match assembly.role() {
        Role::KeyModel => assembly.key_loss(g, &ex.input(), ex.gold_option_index),
        Role::ValueModel => assembly.value_loss(g, &ex.input(), &ex.gold_answer),
    }
}

/// Mean loss and mean gradients over `batch`. Per-item work runs in
/// parallel; the reduction runs in batch order so results are reproducible.
pub fn batch_gradients(assembly: &ModelAssembly, batch: &[&TrainExample]) -> Result<(f64, Gradients)> {
    let per_item: Vec<Result<(f64, Gradients)>> = batch
        .par_iter()
        .map(|ex| {
            let mut g = Graph::new(&assembly.params);
            let loss = example_loss(assembly, &mut g, ex)?;
            Ok((g.scalar(loss), g.backward(loss)?))
        })
        .collect();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    let mut grads = Gradients::new();
    for item in per_item {
        let (loss, g) = item?;
        total += loss;
        for (name, v) in g {
            match grads.get_mut(&name) {
                Some(acc) => *acc += &v,
                None => {
                    grads.insert(name, v);
                }
            }
        }
    }
    for v in grads.values_mut() {
        v.mapv_inplace(|x| x * scale);
    }
    Ok((total * scale, grads))
}

/// One optimizer step; aborts without touching parameters if the loss or
/// any gradient is not finite.
pub fn train_step(
    assembly: &mut ModelAssembly,
    batch: &[&TrainExample],
    cfg: &TrainConfig,
    opt: &mut Adam,
    step: usize,
) -> Result<f64> {
    let ids = || batch.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
    let (loss, grads) = match batch_gradients(assembly, batch) {
        Ok(v) => v,
        Err(Error::Numeric(m)) => {
            return Err(Error::NonFiniteLoss {
                step,
                message: m,
                batch_ids: ids(),
            })
        }
        Err(e) => return Err(e),
    };
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            message: format!("loss is {loss}"),
            batch_ids: ids(),
        });
    }
    if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteLoss {
            step,
            message: format!("non-finite gradient for {name}"),
            batch_ids: ids(),
        });
    }
    opt.step(&mut assembly.params, &grads, cfg.base_lr, cfg.lora_lr)?;
    Ok(loss)
}

/// Answers every example with the role's own decoding and scores it.
pub fn evaluate_examples(assembly: &ModelAssembly, items: &[TrainExample]) -> Result<(f64, f64)> {
    if items.is_empty() {
        return Err(Error::Evaluation("no items to evaluate".into()));
    }
    let answers: Vec<Result<usize>> = items.par_iter().map(|e| assembly.answer_puzzle(&e.input())).collect();
    let mut hits = 0usize;
    let (mut w_hit, mut w_all) = (0.0, 0.0);
    for (e, a) in items.iter().zip(answers) {
        let correct = a? == e.gold_option_index;
        hits += usize::from(correct);
        w_all += e.weight;
        if correct {
            w_hit += e.weight;
        }
    }
    Ok((hits as f64 / items.len() as f64, 100.0 * w_hit / w_all))
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitEvent {
    Batch { step: usize, ids: Vec<String>, loss: f64 },
    Metric(MetricRecord),
    Saved { step: usize },
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub run_config: Option<serde_json::Value>,
    /// Stop after this many steps regardless of `epochs`.
    pub max_steps: Option<usize>,
}

pub struct FitData<'a> {
    pub primary: &'a [TrainExample],
    pub additional: &'a [TrainExample],
    /// Held-out items used to pick the best checkpoint; the training items
    /// are used when empty.
    pub validation: &'a [TrainExample],
}

/// Number of optimizer steps a run takes.
pub fn planned_steps(n_primary: usize, primary_per_batch: usize, epochs: f64) -> usize {
    let per_epoch = n_primary.div_ceil(primary_per_batch.max(1));
    ((epochs * per_epoch as f64).ceil() as usize).max(1)
}

/// Trains one specialist and returns the best-by-validation checkpoint
/// (later evaluations win ties). The final record in the history scores
/// that checkpoint on its training items.
pub fn fit(
    role: Role,
    model: &ModelConfig,
    data: FitData,
    cfg: &TrainConfig,
    lora_cfg: &LoraConfig,
    opts: &FitOptions,
    observer: &mut dyn FnMut(&FitEvent),
) -> Result<Checkpoint> {
    cfg.validate()?;
    let primary = filter_for_role(data.primary, role, cfg.all_categories);
    let additional = filter_for_role(data.additional, role, true);
    let validation = filter_for_role(data.validation, role, cfg.all_categories);
    let validation: &[TrainExample] = if validation.is_empty() { &primary } else { &validation };

    let mut assembly = ModelAssembly::new(model.clone(), role, cfg.seed)?;
    if lora_cfg.enabled {
        lora_wrap(&mut assembly.params, lora_cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x10a))?;
    }
    let mut sampler = MixedSampler::new(primary.len(), additional.len(), cfg.batch_size, cfg.mix_ratio, cfg.seed)?;
    let per_epoch = primary.len().div_ceil(sampler.primary_per_batch().max(1));
    let mut steps = planned_steps(primary.len(), sampler.primary_per_batch(), cfg.epochs);
    if let Some(m) = opts.max_steps {
        steps = steps.min(m.max(1));
    }
    let eval_every = if cfg.eval_every == 0 { per_epoch } else { cfg.eval_every };

    let mut metrics_file = match &opts.metrics_path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Some(fs::File::create(p)?)
        }
        None => None,
    };
    let mut log = |rec: &MetricRecord, observer: &mut dyn FnMut(&FitEvent)| -> Result<()> {
        if let Some(f) = metrics_file.as_mut() {
            serde_json::to_writer(&mut *f, rec)?;
            f.write_all(b"\n")?;
        }
        observer(&FitEvent::Metric(rec.clone()));
        Ok(())
    };

    let mut opt = Adam::default();
    let mut history = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for step in 1..=steps {
        let slots = sampler.next_batch();
        let batch: Vec<&TrainExample> = slots
            .iter()
            .map(|s| match s {
                Source::Primary(i) => &primary[*i],
                Source::Additional(i) => &additional[*i],
            })
            .collect();
        let loss = train_step(&mut assembly, &batch, cfg, &mut opt, step)?;
        observer(&FitEvent::Batch {
            step,
            ids: batch.iter().map(|e| e.id.clone()).collect(),
            loss,
        });
        loss_sum += loss;
        loss_n += 1;

        if step % eval_every == 0 || step == steps {
            let (o_acc, wosa) = evaluate_examples(&assembly, validation)?;
            let rec = MetricRecord {
                step,
                split: "validation".into(),
                o_acc,
                wosa,
                loss: Some(loss_sum / loss_n as f64),
            };
            (loss_sum, loss_n) = (0.0, 0);
            log(&rec, observer)?;
            history.push(rec);
            if best.as_ref().is_none_or(|(b, _)| o_acc >= *b) {
                let ckpt = Checkpoint {
                    assembly: assembly.clone(),
                    train: cfg.clone(),
                    lora: lora_cfg.clone(),
                    step,
                    history: history.clone(),
                    run_config: opts.run_config.clone(),
                };
                if let Some(p) = &opts.checkpoint_path {
                    save_checkpoint(p, &ckpt)?;
                    observer(&FitEvent::Saved { step });
                }
                best = Some((o_acc, ckpt));
            }
        }
    }
    let (_, mut ckpt) = best.expect("at least one evaluation");
    let (o_acc, wosa) = evaluate_examples(&ckpt.assembly, &primary)?;
    let rec = MetricRecord {
        step: ckpt.step,
        split: "train".into(),
        o_acc,
        wosa,
        loss: None,
    };
    log(&rec, observer)?;
    ckpt.history = history;
    ckpt.history.push(rec);
    if let Some(p) = &opts.checkpoint_path {
        save_checkpoint(p, &ckpt)?;
    }
    Ok(ckpt)
}
