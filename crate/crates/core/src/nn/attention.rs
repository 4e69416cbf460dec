//! Multi-head attention, feed-forward and layer-norm blocks on the tape.
//!
//! Parameters live under a name prefix: an attention block at `p` owns
//! `p.wq`, `p.wk`, `p.wv`, `p.wo` and their biases `p.bq` … `p.bo`.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Projection matrix names of an attention block, in the order LoRA targets
/// are usually written.
pub const ATTENTION_WEIGHTS: [&str; 4] = ["wq", "wk", "wv", "wo"];

pub struct AttentionOutput {
    pub out: NodeId,
    /// One `rows_q × rows_kv` probability matrix per head.
    pub probs: Vec<NodeId>,
}

/// Multi-head scaled dot-product attention.
///
/// Queries are projected from `x_q`, keys and values from `x_kv`. Each head
/// uses `softmax(Q_h K_hᵀ / √d_head) V_h`; heads are concatenated and passed
/// through the output projection.
pub fn attention(
    g: &mut Graph,
    prefix: &str,
    x_q: NodeId,
    x_kv: NodeId,
    n_heads: usize,
    causal: bool,
) -> Result<AttentionOutput> {
    let wq = g.weight(&format!("{prefix}.wq"))?;
    let wk = g.weight(&format!("{prefix}.wk"))?;
    let wv = g.weight(&format!("{prefix}.wv"))?;
    let wo = g.weight(&format!("{prefix}.wo"))?;
    let bq = g.param(&format!("{prefix}.bq"))?;
    let bk = g.param(&format!("{prefix}.bk"))?;
    let bv = g.param(&format!("{prefix}.bv"))?;
    let bo = g.param(&format!("{prefix}.bo"))?;

    let (_, d_in_q) = g.shape(x_q);
    let (rows_kv, d_in_kv) = g.shape(x_kv);
    if g.shape(wq).0 != d_in_q {
        return Err(Error::shape(format!(
            "{prefix}: query input dim {d_in_q} does not match projection {}",
            g.shape(wq).0
        )));
    }
    if g.shape(wk).0 != d_in_kv || g.shape(wv).0 != d_in_kv {
        return Err(Error::shape(format!(
            "{prefix}: key/value input dim {d_in_kv} does not match projection {}",
            g.shape(wk).0
        )));
    }
    if rows_kv == 0 {
        return Err(Error::shape(format!("{prefix}: no keys to attend to")));
    }
    let d_attn = g.shape(wq).1;
    if n_heads == 0 || d_attn % n_heads != 0 {
        return Err(Error::shape(format!(
            "{prefix}: attention dim {d_attn} not divisible by {n_heads} heads"
        )));
    }
    let d_head = d_attn / n_heads;
    let scale = 1.0 / (d_head as f64).sqrt();

    let q = g.matmul(x_q, wq);
    let q = g.add_row(q, bq);
    let k = g.matmul(x_kv, wk);
    let k = g.add_row(k, bk);
    let v = g.matmul(x_kv, wv);
    let v = g.add_row(v, bv);

    let mut heads = Vec::with_capacity(n_heads);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * d_head, d_head);
        let kh = g.slice_cols(k, h * d_head, d_head);
        let vh = g.slice_cols(v, h * d_head, d_head);
        let scores = g.matmul_t(qh, kh);
        let scores = g.scale(scores, scale);
        let scores = if causal { g.causal_mask(scores) } else { scores };
        let p = g.softmax(scores);
        probs.push(p);
        heads.push(g.matmul(p, vh));
    }
    let ctx = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    };
    let out = g.matmul(ctx, wo);
    let out = g.add_row(out, bo);
    Ok(AttentionOutput { out, probs })
}

pub fn init_attention<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    d_in_q: usize,
    d_in_kv: usize,
    d_attn: usize,
    d_out: usize,
    rng: &mut R,
) {
    store.init_normal(&format!("{prefix}.wq"), d_in_q, d_attn, (1.0 / d_in_q as f64).sqrt(), rng);
    store.init_normal(&format!("{prefix}.wk"), d_in_kv, d_attn, (1.0 / d_in_kv as f64).sqrt(), rng);
    store.init_normal(&format!("{prefix}.wv"), d_in_kv, d_attn, (1.0 / d_in_kv as f64).sqrt(), rng);
    store.init_normal(&format!("{prefix}.wo"), d_attn, d_out, (1.0 / d_attn as f64).sqrt(), rng);
    store.init_const(&format!("{prefix}.bq"), 1, d_attn, 0.0);
    store.init_const(&format!("{prefix}.bk"), 1, d_attn, 0.0);
    store.init_const(&format!("{prefix}.bv"), 1, d_attn, 0.0);
    store.init_const(&format!("{prefix}.bo"), 1, d_out, 0.0);
}

/// Two-layer feed-forward with GELU.
pub fn feed_forward(g: &mut Graph, prefix: &str, x: NodeId) -> Result<NodeId> {
    let w1 = g.weight(&format!("{prefix}.w1"))?;
    let b1 = g.param(&format!("{prefix}.b1"))?;
    let w2 = g.weight(&format!("{prefix}.w2"))?;
    let b2 = g.param(&format!("{prefix}.b2"))?;
    if g.shape(w1).0 != g.shape(x).1 {
        return Err(Error::shape(format!("{prefix}: input dim mismatch")));
    }
    let h = g.matmul(x, w1);
    let h = g.add_row(h, b1);
    let h = g.gelu(h);
    let o = g.matmul(h, w2);
    Ok(g.add_row(o, b2))
}

pub fn init_feed_forward<R: Rng>(store: &mut ParamStore, prefix: &str, d: usize, hidden: usize, rng: &mut R) {
    store.init_normal(&format!("{prefix}.w1"), d, hidden, (1.0 / d as f64).sqrt(), rng);
    store.init_const(&format!("{prefix}.b1"), 1, hidden, 0.0);
    store.init_normal(&format!("{prefix}.w2"), hidden, d, (1.0 / hidden as f64).sqrt(), rng);
    store.init_const(&format!("{prefix}.b2"), 1, d, 0.0);
}

pub fn layer_norm(g: &mut Graph, prefix: &str, x: NodeId) -> Result<NodeId> {
    let gain = g.param(&format!("{prefix}.g"))?;
    let bias = g.param(&format!("{prefix}.b"))?;
    Ok(g.layer_norm(x, gain, bias))
}

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.init_const(&format!("{prefix}.g"), 1, d, 1.0);
    store.init_const(&format!("{prefix}.b"), 1, d, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
    }

    fn random_block(d_in: usize, d_attn: usize, d_out: usize, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        init_attention(&mut s, "att", d_in, d_in, d_attn, d_out, &mut rng);
        for b in ["bq", "bk", "bv", "bo"] {
            let n = s.value(&format!("att.{b}")).unwrap().ncols();
            s.insert(format!("att.{b}"), randn(1, n, &mut rng) * 0.1);
        }
        s
    }

    /// softmax(Q Kᵀ / √d) V by explicit scalar loops, one head.
    fn brute_force(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        let d = q.ncols() as f64;
        let mut out = Array2::zeros((q.nrows(), v.ncols()));
        for i in 0..q.nrows() {
            let mut logits = vec![0.0; k.nrows()];
            for j in 0..k.nrows() {
                let mut dot = 0.0;
                for c in 0..q.ncols() {
                    dot += q[[i, c]] * k[[j, c]];
                }
                logits[j] = dot / d.sqrt();
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..k.nrows() {
                let w = (logits[j] - m).exp() / z;
                for c in 0..v.ncols() {
                    out[[i, c]] += w * v[[j, c]];
                }
            }
        }
        out
    }

    fn project(x: &Array2<f64>, s: &ParamStore, w: &str, b: &str) -> Array2<f64> {
        x.dot(s.value(w).unwrap()) + s.value(b).unwrap()
    }

    #[test]
    fn matches_scalar_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_block(4, 4, 4, 3);
        let xq = randn(2, 4, &mut rng);
        let xkv = randn(3, 4, &mut rng);
        let mut g = Graph::new(&s);
        let a = g.input(xq.clone());
        let b = g.input(xkv.clone());
        let out = attention(&mut g, "att", a, b, 1, false).unwrap();

        let q = project(&xq, &s, "att.wq", "att.bq");
        let k = project(&xkv, &s, "att.wk", "att.bk");
        let v = project(&xkv, &s, "att.wv", "att.bv");
        let expected = project(&brute_force(&q, &k, &v), &s, "att.wo", "att.bo");
        let got = g.value(out.out);
        for (x, y) in got.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn single_key_returns_projected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_block(4, 8, 4, 9);
        let xq = randn(3, 4, &mut rng);
        let xkv = randn(1, 4, &mut rng);
        let mut g = Graph::new(&s);
        let a = g.input(xq);
        let b = g.input(xkv.clone());
        let out = attention(&mut g, "att", a, b, 2, false).unwrap();
        let v = project(&xkv, &s, "att.wv", "att.bv");
        let expected = project(&v, &s, "att.wo", "att.bo");
        for r in 0..3 {
            for c in 0..4 {
                assert!((g.value(out.out)[[r, c]] - expected[[0, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_keys_attend_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_block(4, 4, 4, 1);
        let row = randn(1, 4, &mut rng);
        let xkv = ndarray::concatenate(ndarray::Axis(0), &[row.view(), row.view(), row.view(), row.view()]).unwrap();
        let mut g = Graph::new(&s);
        let a = g.input(randn(2, 4, &mut rng));
        let b = g.input(xkv);
        let out = attention(&mut g, "att", a, b, 2, false).unwrap();
        for &p in &out.probs {
            for w in g.value(p).iter() {
                assert!((w - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let s = random_block(4, 6, 4, 1);
        let mut g = Graph::new(&s);
        let a = g.input(Array2::zeros((2, 4)));
        let b = g.input(Array2::zeros((3, 5)));
        assert!(attention(&mut g, "att", a, b, 1, false).is_err());
        let c = g.input(Array2::zeros((3, 4)));
        assert!(attention(&mut g, "att", a, c, 4, false).is_err());
    }
}
