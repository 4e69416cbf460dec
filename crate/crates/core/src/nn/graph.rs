//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Every forward pass records its operations on a [`Graph`]; calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! gradients for every parameter the pass touched. Shapes are checked by the
//! layer code before ops are recorded, so ops themselves panic on mismatch.

use std::collections::{BTreeMap, HashMap};

use ndarray::{concatenate, s, Array2, Axis};

use super::params::{lora_a_name, lora_b_name, ParamStore};
use crate::error::{Error, Result};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    CausalMask(NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    SelectCols(NodeId, Vec<usize>),
    Gather(NodeId, Vec<usize>),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Array2<f64>,
    },
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Array2<f64>>;

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id].value.dim()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id].value[[0, 0]]
    }

    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Raw parameter leaf. Repeated lookups share one node.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = self.store.value(name)?.clone();
        let id = self.push(value, Op::Param);
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    /// Effective weight: the base parameter plus its LoRA delta when adapted.
    pub fn weight(&mut self, name: &str) -> Result<NodeId> {
        let base = self.param(name)?;
        match self.store.adapter(name).copied() {
            None => Ok(base),
            Some(adapter) => {
                let a = self.param(&lora_a_name(name))?;
                let b = self.param(&lora_b_name(name))?;
                let ba = self.matmul(b, a);
                let delta = self.scale(ba, adapter.scale());
                Ok(self.add(base, delta))
            }
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        assert_eq!(self.shape(row).0, 1, "add_row expects a 1×n row");
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a) * factor;
        self.push(v, Op::Scale(a, factor))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise layer normalization with learned `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Array2::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (c, v) in row.iter().enumerate() {
                xhat[[r, c]] = (v - mean) * is;
            }
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// Sets entries above the causal diagonal to `-inf` before a softmax.
    /// Row `i` may see columns `0..=i + (cols - rows)`.
    pub fn causal_mask(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let (rows, cols) = v.dim();
        let offset = cols.saturating_sub(rows);
        for r in 0..rows {
            for c in (r + offset + 1)..cols {
                v[[r, c]] = f64::NEG_INFINITY;
            }
        }
        self.push(v, Op::CausalMask(a))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn select_cols(&mut self, a: NodeId, cols: &[usize]) -> NodeId {
        let v = self.value(a).select(Axis(1), cols);
        self.push(v, Op::SelectCols(a, cols.to_vec()))
    }

    /// Embedding lookup: rows of `table` at `ids`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let v = self.value(table).select(Axis(0), ids);
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    /// Summed negative log-likelihood of `targets[r]` under softmax of row `r`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len(), "one target per logit row");
        let probs = softmax_rows(lv);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            v += self.value(p);
        }
        self.push(v, Op::Sum(parts.to_vec()))
    }

    /// Reverse pass from a scalar node. Returns gradients for every parameter
    /// leaf reachable from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward requires a 1×1 loss node"));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Array2::ones((1, 1)));

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads, *a, g * *f);
                }
                Op::CausalMask(a) => {
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gv, &v| {
                            if v == f64::NEG_INFINITY {
                                *gv = 0.0;
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= gelu_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gain_v = self.value(*gain);
                    let dgain = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gain_v;
                    let cols = dxhat.ncols() as f64;
                    let mut dx = Array2::zeros(dxhat.dim());
                    for r in 0..dxhat.nrows() {
                        let dr = dxhat.row(r);
                        let xr = xhat.row(r);
                        let mean_d = dr.sum() / cols;
                        let mean_dx = dr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum::<f64>() / cols;
                        for c in 0..dxhat.ncols() {
                            dx[[r, c]] = inv_std[r] * (dr[c] - mean_d - xr[c] * mean_dx);
                        }
                    }
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r).iter()).map(|(p, q)| p * q).sum();
                        for c in 0..y.ncols() {
                            ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.shape(p).0;
                        accumulate(&mut grads, p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.shape(p).1;
                        accumulate(&mut grads, p, g.slice(s![.., start..start + n]).to_owned());
                        start += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    let n = g.nrows();
                    ga.slice_mut(s![*start..*start + n, ..]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    let n = g.ncols();
                    ga.slice_mut(s![.., *start..*start + n]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SelectCols(a, cols) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (j, &c) in cols.iter().enumerate() {
                        let mut col = ga.column_mut(c);
                        col += &g.column(j);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(table, ids) => {
                    let mut gt = Array2::zeros(self.value(*table).dim());
                    for (j, &i) in ids.iter().enumerate() {
                        let mut row = gt.row_mut(i);
                        row += &g.row(j);
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let upstream = g[[0, 0]];
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[[r, t]] -= 1.0;
                    }
                    gl *= upstream;
                    accumulate(&mut grads, *logits, gl);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, g.clone());
                    }
                }
            }
        }

        let mut out = Gradients::new();
        for (name, &id) in &self.params {
            if let Some(g) = grads[id].take() {
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
    match &mut grads[id] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Numerically stable row-wise softmax; `-inf` entries get probability 0.
pub fn softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}
