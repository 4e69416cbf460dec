//! Toy answer decoder and the full vision → bridge → decoder assembly.
//!
//! The decoder is a small causal transformer over the bridge's query
//! outputs followed by the embedded prompt. The key model reads the five
//! option-token logits at the last prompt position; the value model decodes
//! greedily over the numeric sub-vocabulary.

use image::RgbImage;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::attention::{attention, feed_forward, init_attention, init_feed_forward, init_layer_norm, layer_norm};
use crate::nn::graph::softmax_rows;
use crate::nn::{Graph, NodeId, ParamStore};
use crate::puzzle::{select_option_by_value, PuzzleInstance, SkillCategory, NUM_OPTIONS};
use crate::qformer::{init_qformer_params, qformer_graph, QFormerConfig};
use crate::tokenizer::{
    category_token, encode_numeric_answer, numeric_char, numeric_tokens, option_token, TokenId, Vocab, BOS, DOT, EOS,
    MINUS, SEP,
};
use crate::vision::{fused_tokens, init_vision_params, VisionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Longest sequence (query outputs + prompt + generated tokens).
    pub max_positions: usize,
    pub max_value_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            max_positions: 256,
            max_value_len: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vision: VisionConfig,
    pub qformer: QFormerConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.vision.validate()?;
        self.qformer.validate()?;
        let d = &self.decoder;
        if d.n_heads == 0 || self.qformer.d_dec % d.n_heads != 0 {
            return Err(Error::Config(format!(
                "qformer.d_dec {} not divisible by decoder.n_heads {}",
                self.qformer.d_dec, d.n_heads
            )));
        }
        if d.max_value_len == 0 || d.d_ff == 0 {
            return Err(Error::Config("decoder.max_value_len and decoder.d_ff must be positive".into()));
        }
        let min = self.qformer.n_queries + d.max_value_len + 16;
        if d.max_positions < min {
            return Err(Error::Config(format!("decoder.max_positions must be at least {min}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    KeyModel,
    ValueModel,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::KeyModel => "key_model",
            Role::ValueModel => "value_model",
        })
    }
}

/// Serializes caption, question and (key role only) options into tokens.
///
/// Layout: `BOS [caption : <caption> SEP] question : <question> SEP` then,
/// for the key role, `options : OPT_A <opt> OPT_B <opt> … SEP answer : SEP`
/// and for the value role `answer with a number : SEP`. The empty caption
/// block is omitted entirely.
pub fn build_prompt(question: &str, caption: &str, options: &[String], role: Role) -> Vec<TokenId> {
    let v = Vocab::get();
    let mut t = vec![BOS];
    if !caption.trim().is_empty() {
        t.extend(v.encode("caption :"));
        t.extend(v.encode(caption));
        t.push(SEP);
    }
    t.extend(v.encode("question :"));
    t.extend(v.encode(question));
    t.push(SEP);
    match role {
        Role::KeyModel => {
            t.extend(v.encode("options :"));
            for (i, o) in options.iter().take(NUM_OPTIONS).enumerate() {
                t.push(option_token(i));
                t.extend(v.encode(o));
            }
            t.push(SEP);
            t.extend(v.encode("answer :"));
        }
        Role::ValueModel => t.extend(v.encode("answer with a number :")),
    }
    t.push(SEP);
    t
}

/// Classification prompt: caption and question blocks followed by the
/// router instruction.
pub fn build_classification_prompt(question: &str, caption: &str, instruction: &str) -> Vec<TokenId> {
    let v = Vocab::get();
    let mut t = vec![BOS];
    if !caption.trim().is_empty() {
        t.extend(v.encode("caption :"));
        t.extend(v.encode(caption));
        t.push(SEP);
    }
    t.extend(v.encode("question :"));
    t.extend(v.encode(question));
    t.push(SEP);
    t.extend(v.encode(instruction));
    t.push(SEP);
    t
}

/// What the model sees of one puzzle.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub image: &'a RgbImage,
    pub question: &'a str,
    pub options: &'a [String],
    pub caption: &'a str,
}

impl<'a> ModelInput<'a> {
    pub fn new(puzzle: &'a PuzzleInstance, caption: &'a str) -> Self {
        ModelInput {
            image: &puzzle.image,
            question: &puzzle.question,
            options: &puzzle.options,
            caption,
        }
    }
}

/// Grammar state of a partially decoded value, following
/// `-?[0-9]*(\.[0-9]+)?`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NumState {
    Start,
    Integer,
    AfterDot,
    Fraction,
}

impl NumState {
    fn allows(self, token: TokenId) -> bool {
        let digit = numeric_char(token).is_some_and(|c| c.is_ascii_digit());
        match self {
            NumState::Start => digit || token == MINUS || token == DOT || token == EOS,
            NumState::Integer => digit || token == DOT || token == EOS,
            NumState::AfterDot => digit,
            NumState::Fraction => digit || token == EOS,
        }
    }

    fn next(self, token: TokenId) -> NumState {
        match (self, token) {
            (NumState::Start, MINUS) => NumState::Integer,
            (NumState::Start | NumState::Integer, DOT) => NumState::AfterDot,
            (NumState::Start | NumState::Integer, _) => NumState::Integer,
            _ => NumState::Fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssembly {
    pub config: ModelConfig,
    role: Role,
    pub params: ParamStore,
}

fn init_decoder_params<R: rand::Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) {
    let d = cfg.qformer.d_dec;
    let v = Vocab::get().size();
    store.init_normal("decoder.tok_embed", v, d, 0.5, rng);
    store.init_normal("decoder.pos_embed", cfg.decoder.max_positions, d, 0.1, rng);
    store.init_normal("qformer.instr_embed", v, cfg.qformer.d_q, 0.5, rng);
    for l in 0..cfg.decoder.n_layers {
        let p = format!("decoder.l{l}");
        init_layer_norm(store, &format!("{p}.ln_attn"), d);
        init_attention(store, &format!("{p}.attn"), d, d, d, d, rng);
        init_layer_norm(store, &format!("{p}.ln_ffn"), d);
        init_feed_forward(store, &format!("{p}.ffn"), d, cfg.decoder.d_ff, rng);
    }
    init_layer_norm(store, "decoder.ln_out", d);
    store.init_normal("decoder.out.w", d, v, (1.0 / d as f64).sqrt(), rng);
    store.init_const("decoder.out.b", 1, v, 0.0);
}

impl ModelAssembly {
    pub fn new(config: ModelConfig, role: Role, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        init_vision_params(&mut params, &config.vision, &mut rng);
        init_qformer_params(&mut params, &config.qformer, config.vision.d, &mut rng);
        init_decoder_params(&mut params, &config, &mut rng);
        Ok(ModelAssembly { config, role, params })
    }

    /// Rebuilds an assembly from stored parameters, checking that every
    /// tensor the architecture needs is present with the right shape.
    pub fn from_parts(config: ModelConfig, role: Role, params: ParamStore) -> Result<Self> {
        let reference = ModelAssembly::new(config.clone(), role, 0)?;
        for (name, p) in reference.params.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if got.value.dim() != p.value.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.value.dim(),
                    p.value.dim()
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(ModelAssembly { config, role, params })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn prompt_budget(&self) -> usize {
        self.config.decoder.max_positions - self.config.qformer.n_queries - self.config.decoder.max_value_len - 1
    }

    /// Prompt for this assembly's role; the caption is shortened word by
    /// word from the end if the prompt would not fit.
    pub fn prompt(&self, input: &ModelInput) -> Vec<TokenId> {
        build_prompt_for(self, input, self.role)
    }

    pub fn classification_prompt(&self, input: &ModelInput, instruction: &str) -> Vec<TokenId> {
        fit_prompt(self.prompt_budget(), input.caption, |c| {
            build_classification_prompt(input.question, c, instruction)
        })
    }

    /// Final hidden states (after the output norm) for the sequence of query
    /// outputs followed by `tokens`.
    fn hidden(&self, g: &mut Graph, input: &ModelInput, tokens: &[TokenId]) -> Result<NodeId> {
        let cfg = &self.config;
        let n_q = cfg.qformer.n_queries;
        let len = n_q + tokens.len();
        if len > cfg.decoder.max_positions {
            return Err(Error::shape(format!(
                "sequence of {len} positions exceeds decoder.max_positions {}",
                cfg.decoder.max_positions
            )));
        }
        let (fused, _) = fused_tokens(g, input.image, &cfg.vision)?;
        let instr_ids = Vocab::get().encode(input.question);
        let instr = if instr_ids.is_empty() {
            None
        } else {
            let table = g.param("qformer.instr_embed")?;
            Some(g.gather(table, &instr_ids))
        };
        let queries = qformer_graph(g, &cfg.qformer, fused, instr)?;
        let table = g.param("decoder.tok_embed")?;
        let emb = g.gather(table, tokens);
        let pos_table = g.param("decoder.pos_embed")?;
        let pos = g.slice_rows(pos_table, 0, len);
        let x = g.concat_rows(&[queries, emb]);
        let mut x = g.add(x, pos);
        for l in 0..cfg.decoder.n_layers {
            let p = format!("decoder.l{l}");
            let h = layer_norm(g, &format!("{p}.ln_attn"), x)?;
            let a = attention(g, &format!("{p}.attn"), h, h, cfg.decoder.n_heads, true)?;
            x = g.add(x, a.out);
            let h = layer_norm(g, &format!("{p}.ln_ffn"), x)?;
            let f = feed_forward(g, &format!("{p}.ffn"), h)?;
            x = g.add(x, f);
        }
        layer_norm(g, "decoder.ln_out", x)
    }

    /// Vocabulary logits for sequence rows `start..start + count`.
    fn logits_rows(&self, g: &mut Graph, hidden: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let h = g.slice_rows(hidden, start, count);
        let w = g.weight("decoder.out.w")?;
        let b = g.param("decoder.out.b")?;
        let out = g.matmul(h, w);
        Ok(g.add_row(out, b))
    }

    /// `1 × n` logits of the option tokens at the last prompt position,
    /// where `n` is the number of options (at most five).
    pub fn key_logits(&self, g: &mut Graph, input: &ModelInput) -> Result<NodeId> {
        let n = input.options.len().min(NUM_OPTIONS);
        if n == 0 {
            return Err(Error::invalid("puzzle has no options"));
        }
        let tokens = build_prompt_for(self, input, Role::KeyModel);
        let hidden = self.hidden(g, input, &tokens)?;
        let last = self.config.qformer.n_queries + tokens.len() - 1;
        let logits = self.logits_rows(g, hidden, last, 1)?;
        let cols: Vec<usize> = (0..n).map(option_token).collect();
        Ok(g.select_cols(logits, &cols))
    }

    /// `1 × 8` logits of the category tokens after the classification prompt.
    pub fn category_logits(&self, g: &mut Graph, input: &ModelInput, instruction: &str) -> Result<NodeId> {
        let tokens = self.classification_prompt(input, instruction);
        let hidden = self.hidden(g, input, &tokens)?;
        let last = self.config.qformer.n_queries + tokens.len() - 1;
        let logits = self.logits_rows(g, hidden, last, 1)?;
        let cols: Vec<usize> = SkillCategory::ALL.iter().map(|c| category_token(*c)).collect();
        Ok(g.select_cols(logits, &cols))
    }

    /// Numeric sub-vocabulary logits (columns in `numeric_tokens()` order)
    /// for the positions predicting `prefix.len() + 1` value tokens.
    pub fn value_logits(&self, g: &mut Graph, input: &ModelInput, prefix: &[TokenId]) -> Result<NodeId> {
        let mut tokens = build_prompt_for(self, input, Role::ValueModel);
        let prompt_len = tokens.len();
        tokens.extend_from_slice(prefix);
        let hidden = self.hidden(g, input, &tokens)?;
        let start = self.config.qformer.n_queries + prompt_len - 1;
        let logits = self.logits_rows(g, hidden, start, prefix.len() + 1)?;
        Ok(g.select_cols(logits, &numeric_tokens()))
    }

    /// Summed cross-entropy of the gold option over the option logits.
    pub fn key_loss(&self, g: &mut Graph, input: &ModelInput, gold: usize) -> Result<NodeId> {
        let logits = self.key_logits(g, input)?;
        if gold >= g.shape(logits).1 {
            return Err(Error::invalid(format!("gold option {gold} out of range")));
        }
        Ok(g.cross_entropy(logits, &[gold]))
    }

    /// Teacher-forced cross-entropy summed over the gold characters and EOS.
    pub fn value_loss(&self, g: &mut Graph, input: &ModelInput, gold: &str) -> Result<NodeId> {
        let target = encode_numeric_answer(gold)
            .ok_or_else(|| Error::invalid(format!("gold answer {gold:?} is not numeric")))?;
        if target.len() > self.config.decoder.max_value_len + 1 {
            return Err(Error::invalid(format!("gold answer {gold:?} longer than decoder.max_value_len")));
        }
        let logits = self.value_logits(g, input, &target[..target.len() - 1])?;
        let sub = numeric_tokens();
        let targets: Vec<usize> = target
            .iter()
            .map(|t| sub.iter().position(|s| s == t).expect("numeric token"))
            .collect();
        Ok(g.cross_entropy(logits, &targets))
    }

    pub fn classification_loss(
        &self,
        g: &mut Graph,
        input: &ModelInput,
        instruction: &str,
        category: SkillCategory,
    ) -> Result<NodeId> {
        let logits = self.category_logits(g, input, instruction)?;
        Ok(g.cross_entropy(logits, &[category.index()]))
    }

    fn row_values(&self, f: impl FnOnce(&mut Graph) -> Result<NodeId>) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let node = f(&mut g)?;
        let values: Vec<f64> = g.value(node).iter().copied().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Ok(values)
    }

    /// Option index (argmax, lowest index on ties) and the softmax over the
    /// option logits.
    pub fn decode_key(&self, input: &ModelInput) -> Result<(usize, Vec<f64>)> {
        if self.role != Role::KeyModel {
            return Err(Error::invalid("decode_key needs a key model"));
        }
        let logits = self.row_values(|g| self.key_logits(g, input))?;
        let probs = softmax_rows(&Array2::from_shape_vec((1, logits.len()), logits.clone()).expect("row"));
        Ok((argmax(&logits), probs.iter().copied().collect()))
    }

    pub fn category_scores(&self, input: &ModelInput, instruction: &str) -> Result<[f64; 8]> {
        let v = self.row_values(|g| self.category_logits(g, input, instruction))?;
        let mut out = [0.0; 8];
        out.copy_from_slice(&v);
        Ok(out)
    }

    /// Greedy decode over the numeric sub-vocabulary, constrained so the
    /// result always matches `-?[0-9]*(\.[0-9]+)?`. A dot left dangling when
    /// `max_len` runs out is dropped.
    pub fn decode_value(&self, input: &ModelInput, max_len: usize) -> Result<String> {
        if self.role != Role::ValueModel {
            return Err(Error::invalid("decode_value needs a value model"));
        }
        let max_len = max_len.min(self.config.decoder.max_value_len);
        let sub = numeric_tokens();
        let mut prefix: Vec<TokenId> = Vec::new();
        let mut state = NumState::Start;
        let mut out = String::new();
        while prefix.len() < max_len {
            let logits = self.row_values(|g| {
                let all = self.value_logits(g, input, &prefix)?;
                let last = g.shape(all).0 - 1;
                Ok(g.slice_rows(all, last, 1))
            })?;
            let masked: Vec<f64> = sub
                .iter()
                .zip(&logits)
                .map(|(t, l)| if state.allows(*t) { *l } else { f64::NEG_INFINITY })
                .collect();
            let token = sub[argmax(&masked)];
            if token == EOS {
                break;
            }
            out.push(numeric_char(token).expect("numeric token"));
            state = state.next(token);
            prefix.push(token);
        }
        if out.ends_with('.') {
            out.pop();
        }
        Ok(out)
    }

    /// The role's answer mapped to an option index.
    pub fn answer_puzzle(&self, input: &ModelInput) -> Result<usize> {
        match self.role {
            Role::KeyModel => Ok(self.decode_key(input)?.0),
            Role::ValueModel => {
                let value = self.decode_value(input, self.config.decoder.max_value_len)?;
                Ok(select_option_by_value(&value, input.options))
            }
        }
    }
}

fn build_prompt_for(assembly: &ModelAssembly, input: &ModelInput, role: Role) -> Vec<TokenId> {
    fit_prompt(assembly.prompt_budget(), input.caption, |c| {
        build_prompt(input.question, c, input.options, role)
    })
}

fn fit_prompt(budget: usize, caption: &str, build: impl Fn(&str) -> Vec<TokenId>) -> Vec<TokenId> {
    let full = build(caption);
    if full.len() <= budget {
        return full;
    }
    let mut words: Vec<&str> = caption.split_whitespace().collect();
    while !words.is_empty() {
        words.pop();
        let t = build(&words.join(" "));
        if t.len() <= budget {
            return t;
        }
    }
    build("")
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
