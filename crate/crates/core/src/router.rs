//! Zero-shot routing: the key model scores the eight category tokens after
//! a classification prompt, the winning category's answer kind picks the
//! specialist, and the specialist answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{argmax, ModelAssembly, ModelInput, Role};
use crate::error::{Error, Result};
use crate::puzzle::{answer_kind_for_category, AnswerKind, SkillCategory};

pub const DEFAULT_ROUTER_PROMPT: &str = "Which skill does this puzzle require? Categories: logic, counting, \
spatial_reasoning, path_tracing, pattern_finding, arithmetic, measurement, algebra.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub prompt: String,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            prompt: DEFAULT_ROUTER_PROMPT.to_string(),
        }
    }
}

/// What the router needs from a specialist model.
pub trait Specialist: Sync {
    fn role(&self) -> Role;
    fn category_logits(&self, input: &ModelInput, instruction: &str) -> Result<[f64; 8]>;
    fn answer(&self, input: &ModelInput) -> Result<usize>;
}

impl Specialist for ModelAssembly {
    fn role(&self) -> Role {
        ModelAssembly::role(self)
    }

    fn category_logits(&self, input: &ModelInput, instruction: &str) -> Result<[f64; 8]> {
        self.category_scores(input, instruction)
    }

    fn answer(&self, input: &ModelInput) -> Result<usize> {
        self.answer_puzzle(input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub predicted_category: SkillCategory,
    pub predicted_kind: AnswerKind,
    pub chosen_model: Role,
    pub classifier_logits: [f64; 8],
}

pub fn model_for_kind(kind: AnswerKind) -> Role {
    match kind {
        AnswerKind::Key => Role::KeyModel,
        AnswerKind::Value => Role::ValueModel,
    }
}

/// Decision implied by a vector of category logits.
pub fn decide(logits: [f64; 8]) -> RoutingDecision {
    let category = SkillCategory::from_index(argmax(&logits)).expect("eight categories");
    let kind = answer_kind_for_category(category);
    RoutingDecision {
        predicted_category: category,
        predicted_kind: kind,
        chosen_model: model_for_kind(kind),
        classifier_logits: logits,
    }
}

pub fn classify_puzzle(key: &dyn Specialist, input: &ModelInput, cfg: &RouterConfig) -> Result<RoutingDecision> {
    if key.role() != Role::KeyModel {
        return Err(Error::invalid("classification runs on the key model"));
    }
    Ok(decide(key.category_logits(input, &cfg.prompt)?))
}

pub fn route_and_answer(
    key: &dyn Specialist,
    value: &dyn Specialist,
    input: &ModelInput,
    cfg: &RouterConfig,
) -> Result<(RoutingDecision, usize)> {
    if value.role() != Role::ValueModel {
        return Err(Error::invalid("value slot holds a key model"));
    }
    let decision = classify_puzzle(key, input, cfg)?;
    let answer = match decision.chosen_model {
        Role::KeyModel => key.answer(input)?,
        Role::ValueModel => value.answer(input)?,
    };
    Ok((decision, answer))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub p_kind: f64,
    pub key_acc: f64,
    pub value_acc: f64,
    pub misrouted_key_acc: f64,
    pub misrouted_value_acc: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SimulationParams {
    /// Closed-form expected accuracy over `true_kinds`.
    pub fn expected(&self, true_kinds: &[AnswerKind]) -> f64 {
        let mean = |kind: &AnswerKind| match kind {
            AnswerKind::Key => self.p_kind * self.key_acc + (1.0 - self.p_kind) * self.misrouted_key_acc,
            AnswerKind::Value => self.p_kind * self.value_acc + (1.0 - self.p_kind) * self.misrouted_value_acc,
        };
        true_kinds.iter().map(mean).sum::<f64>() / true_kinds.len() as f64
    }
}

/// Monte-Carlo estimate of option accuracy under an imperfect binary
/// router. Each trial draws a puzzle kind uniformly from `true_kinds`,
/// routes it correctly with probability `p_kind`, and scores it with the
/// accuracy of the (kind, routed correctly?) pair. `misrouted_key_acc` is
/// the accuracy on key puzzles sent to the value model, and vice versa.
pub fn simulate_routing(true_kinds: &[AnswerKind], params: &SimulationParams) -> Result<f64> {
    let probs = [
        params.p_kind,
        params.key_acc,
        params.value_acc,
        params.misrouted_key_acc,
        params.misrouted_value_acc,
    ];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    if params.trials == 0 || true_kinds.is_empty() {
        return Err(Error::invalid("need at least one trial and one puzzle kind"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut correct = 0usize;
    for _ in 0..params.trials {
        let kind = true_kinds[rng.random_range(0..true_kinds.len())];
        let routed = rng.random_bool(params.p_kind);
        let acc = match (kind, routed) {
            (AnswerKind::Key, true) => params.key_acc,
            (AnswerKind::Value, true) => params.value_acc,
            (AnswerKind::Key, false) => params.misrouted_key_acc,
            (AnswerKind::Value, false) => params.misrouted_value_acc,
        };
        if rng.random_bool(acc) {
            correct += 1;
        }
    }
    Ok(correct as f64 / params.trials as f64)
}
