//! Query-token bridge between visual tokens and the decoder.
//!
//! Each layer runs three pre-norm residual sublayers on the query states:
//! self-attention whose keys/values are the normalized queries followed by
//! the normalized instruction tokens (instruction rows are read, never
//! updated), cross-attention into the fused visual tokens, and a GELU
//! feed-forward. Final states go through a `d_q → d_dec` projection.
//! Visual tokens get no positional terms here.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::attention::{attention, feed_forward, init_attention, init_feed_forward, init_layer_norm, layer_norm};
use crate::nn::{Graph, NodeId, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QFormerConfig {
    pub n_queries: usize,
    pub d_q: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub d_dec: usize,
}

impl Default for QFormerConfig {
    fn default() -> Self {
        QFormerConfig {
            n_queries: 8,
            d_q: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            d_dec: 32,
        }
    }
}

impl QFormerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.d_q == 0 || self.d_dec == 0 || self.d_ff == 0 {
            return Err(Error::Config("qformer dimensions must be positive".into()));
        }
        if self.n_heads == 0 || self.d_q % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "qformer.d_q {} not divisible by qformer.n_heads {}",
                self.d_q, self.n_heads
            )));
        }
        Ok(())
    }
}

fn layer_prefix(l: usize) -> String {
    format!("qformer.l{l}")
}

/// Initializes bridge parameters; `d_visual` is the fused-token width.
pub fn init_qformer_params<R: Rng>(store: &mut ParamStore, cfg: &QFormerConfig, d_visual: usize, rng: &mut R) {
    store.init_normal("qformer.query", cfg.n_queries, cfg.d_q, 0.5, rng);
    for l in 0..cfg.n_layers {
        let p = layer_prefix(l);
        init_layer_norm(store, &format!("{p}.ln_self"), cfg.d_q);
        init_attention(store, &format!("{p}.self"), cfg.d_q, cfg.d_q, cfg.d_q, cfg.d_q, rng);
        init_layer_norm(store, &format!("{p}.ln_cross"), cfg.d_q);
        init_attention(store, &format!("{p}.cross"), cfg.d_q, d_visual, cfg.d_q, cfg.d_q, rng);
        init_layer_norm(store, &format!("{p}.ln_ffn"), cfg.d_q);
        init_feed_forward(store, &format!("{p}.ffn"), cfg.d_q, cfg.d_ff, rng);
    }
    store.init_normal("qformer.proj.w", cfg.d_q, cfg.d_dec, (1.0 / cfg.d_q as f64).sqrt(), rng);
    store.init_const("qformer.proj.b", 1, cfg.d_dec, 0.0);
}

/// Bridge forward pass on the tape. `instruction` may be `None` (T = 0).
/// Returns the `N_q × d_dec` output node.
pub fn qformer_graph(
    g: &mut Graph,
    cfg: &QFormerConfig,
    fused: NodeId,
    instruction: Option<NodeId>,
) -> Result<NodeId> {
    let mut q = g.param("qformer.query")?;
    let (n_q, d_q) = g.shape(q);
    if let Some(instr) = instruction {
        if g.shape(instr).1 != d_q {
            return Err(Error::shape(format!(
                "instruction tokens are {} wide, bridge expects {d_q}",
                g.shape(instr).1
            )));
        }
    }
    for l in 0..cfg.n_layers {
        let p = layer_prefix(l);

        let kv_in = match instruction {
            Some(instr) => g.concat_rows(&[q, instr]),
            None => q,
        };
        let kv = layer_norm(g, &format!("{p}.ln_self"), kv_in)?;
        let qn = g.slice_rows(kv, 0, n_q);
        let a = attention(g, &format!("{p}.self"), qn, kv, cfg.n_heads, false)?;
        q = g.add(q, a.out);

        let qn = layer_norm(g, &format!("{p}.ln_cross"), q)?;
        let a = attention(g, &format!("{p}.cross"), qn, fused, cfg.n_heads, false)?;
        q = g.add(q, a.out);

        let qn = layer_norm(g, &format!("{p}.ln_ffn"), q)?;
        let f = feed_forward(g, &format!("{p}.ffn"), qn)?;
        q = g.add(q, f);
    }
    let w = g.weight("qformer.proj.w")?;
    let b = g.param("qformer.proj.b")?;
    let out = g.matmul(q, w);
    Ok(g.add_row(out, b))
}

/// Value-level bridge: `fused` is `M × d`, `instruction` is `T × d_q`
/// (zero rows allowed).
pub fn qformer_forward(
    fused: &Array2<f64>,
    instruction: &Array2<f64>,
    params: &ParamStore,
    cfg: &QFormerConfig,
) -> Result<Array2<f64>> {
    if fused.iter().chain(instruction.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input to the bridge".into()));
    }
    let mut g = Graph::new(params);
    let f = g.input(fused.clone());
    let instr = (instruction.nrows() > 0).then(|| g.input(instruction.clone()));
    let out = qformer_graph(&mut g, cfg, f, instr)?;
    let value = g.value(out).clone();
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite bridge output".into()));
    }
    Ok(value)
}
