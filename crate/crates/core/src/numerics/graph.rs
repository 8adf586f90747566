//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation on a [`Graph`] evaluates eagerly and appends a node holding
//! its value plus whatever the backward rule needs. [`Graph::backward`] walks
//! the nodes in exact reverse recording order and deposits parameter
//! gradients into the owning [`ParamStore`].

use super::kernels::{self, AttentionShape};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{AsfError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Exact operation counts gathered by the instrumented kernels of one graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    /// Query-key score evaluations inside attention, counted once per
    /// (query, key) pair regardless of head count.
    pub attention_score_evals: u64,
    /// Multiply-adds spent in dense matrix products.
    pub mult_adds: u64,
}

/// Index used by [`Graph::gather`] to emit a zero instead of reading the input.
pub const GATHER_ZERO: usize = usize::MAX;

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttentionShape,
        probs: Vec<f64>,
    },
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    PoolRows {
        x: Var,
        groups: Vec<Vec<usize>>,
    },
    Sum(Var),
    Sigmoid(Var),
    FocalLoss {
        logits: Var,
        dlogits: Vec<f64>,
    },
    SmoothL1 {
        pred: Var,
        dpred: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A recording of one forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    counter: OpCounter,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            counter: OpCounter::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn counter(&self) -> OpCounter {
        self.counter
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a tensor that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "constant input")
    }

    /// Records the current value of a trainable parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(store.value(id).clone(), Op::Param(id), store.name(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let (m, k) = self.value(a).dims2()?;
        let n = out.shape()[1];
        self.counter.mult_adds += (m * k * n) as u64;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.value(x).dims2()?;
        if self.value(bias).len() != n {
            return Err(AsfError::Dimension(format!(
                "bias of length {} for width {n}",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddBias(x, bias), "add_bias")
    }

    /// `x·W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(AsfError::Dimension(format!(
                "add of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push(out, Op::Scale(x, factor), "scale")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = kernels::gelu(self.value(x));
        self.push(out, Op::Gelu(x), "gelu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data = self.value(x).data().iter().map(|&v| sigmoid(v)).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let parts =
            kernels::layer_norm_parts(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let out = Tensor::new(self.shape(x).to_vec(), parts.out)?;
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat: parts.xhat,
                inv_std: parts.inv_std,
            },
            "layer_norm",
        )
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = kernels::softmax(self.value(x))?;
        self.push(out, Op::Softmax(x), "softmax")
    }

    /// Scaled dot-product attention on projected inputs.
    ///
    /// `q` is `queries×width` and shared by every group; `k` and `v` are
    /// `(groups·keys)×width` with each group's keys contiguous. The output is
    /// `(groups·queries)×width`. Probabilities are returned as
    /// `[groups][heads][queries][keys]`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        groups: usize,
    ) -> Result<(Var, Vec<f64>)> {
        let (queries, width) = self.value(q).dims2()?;
        let (krows, kw) = self.value(k).dims2()?;
        if self.shape(k) != self.shape(v) || kw != width {
            return Err(AsfError::Dimension(format!(
                "attention q {:?}, k {:?}, v {:?}",
                self.shape(q),
                self.shape(k),
                self.shape(v)
            )));
        }
        if groups == 0 || krows % groups != 0 {
            return Err(AsfError::Dimension(format!(
                "{krows} key rows do not split into {groups} groups"
            )));
        }
        let keys = krows / groups;
        AttentionShape::validate(width, heads, keys)?;
        let shape = AttentionShape {
            heads,
            groups,
            queries,
            keys,
            width,
        };
        let (out, probs) = kernels::attention_core(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            shape,
        );
        self.counter.attention_score_evals += shape.score_evals();
        let out = Tensor::new(vec![groups * queries, width], out)?;
        let var = self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs: probs.clone(),
            },
            "attention",
        )?;
        Ok((var, probs))
    }

    /// Element gather: `out[j] = x[index[j]]`, or zero for [`GATHER_ZERO`].
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        let data = index
            .iter()
            .map(|&i| {
                if i == GATHER_ZERO {
                    Ok(0.0)
                } else {
                    src.get(i).copied().ok_or_else(|| {
                        AsfError::Dimension(format!("gather index {i} out of {}", src.len()))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let out = Tensor::new(shape.to_vec(), data)?;
        self.push(out, Op::Gather { x, index }, "gather")
    }

    /// Reinterprets the shape without moving data.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.value(x).len();
        self.gather(x, (0..n).collect(), shape)
    }

    /// Stacks matrices of equal width on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| AsfError::Dimension("concat of zero parts".into()))?;
        let (_, width) = self.value(first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, w) = self.value(p).dims2()?;
            if w != width {
                return Err(AsfError::Dimension(format!(
                    "concat widths {width} and {w}"
                )));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, width], data)?;
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Output row `j` is the mean of the input rows listed in `groups[j]`.
    pub fn pool_rows(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (rows, width) = self.value(x).dims2()?;
        let mut data = vec![0.0; groups.len() * width];
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() || g.iter().any(|&r| r >= rows) {
                return Err(AsfError::Dimension(format!("bad pooling group {g:?}")));
            }
            let inv = 1.0 / g.len() as f64;
            let out = &mut data[j * width..(j + 1) * width];
            for &r in g {
                for (o, v) in out.iter_mut().zip(self.value(x).row(r)) {
                    *o += v * inv;
                }
            }
        }
        let out = Tensor::new(vec![groups.len(), width], data)?;
        self.push(out, Op::PoolRows { x, groups }, "pool_rows")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), "sum")
    }

    /// Sigmoid focal loss on logits, summed over elements and divided by
    /// `normalizer`. Elements with weight zero contribute nothing.
    pub fn focal_loss(
        &mut self,
        logits: Var,
        targets: &[f64],
        weights: &[f64],
        alpha: f64,
        gamma: f64,
        normalizer: f64,
    ) -> Result<Var> {
        let z = self.value(logits).data();
        if targets.len() != z.len() || weights.len() != z.len() {
            return Err(AsfError::Dimension("focal loss target length".into()));
        }
        let mut total = 0.0;
        let mut dlogits = vec![0.0; z.len()];
        for i in 0..z.len() {
            if weights[i] == 0.0 {
                continue;
            }
            let (l, d) = focal_from_logit(z[i], targets[i], alpha, gamma);
            total += weights[i] * l;
            dlogits[i] = weights[i] * d / normalizer;
        }
        let out = Tensor::scalar(total / normalizer);
        self.push(out, Op::FocalLoss { logits, dlogits }, "focal_loss")
    }

    /// Smooth-L1 between `pred` and a constant `target`, elementwise weights,
    /// summed and divided by `normalizer`.
    pub fn smooth_l1(
        &mut self,
        pred: Var,
        target: &[f64],
        weights: &[f64],
        beta: f64,
        normalizer: f64,
    ) -> Result<Var> {
        let p = self.value(pred).data();
        if target.len() != p.len() || weights.len() != p.len() {
            return Err(AsfError::Dimension("smooth-l1 target length".into()));
        }
        let mut total = 0.0;
        let mut dpred = vec![0.0; p.len()];
        for i in 0..p.len() {
            if weights[i] == 0.0 {
                continue;
            }
            let d = p[i] - target[i];
            let (l, g) = if d.abs() < beta {
                (0.5 * d * d / beta, d / beta)
            } else {
                (d.abs() - 0.5 * beta, d.signum())
            };
            total += weights[i] * l;
            dpred[i] = weights[i] * g / normalizer;
        }
        let out = Tensor::scalar(total / normalizer);
        self.push(out, Op::SmoothL1 { pred, dpred }, "smooth_l1")
    }

    /// Propagates `d loss / d node` back to every parameter node and
    /// accumulates into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(AsfError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if self.nodes.is_empty() {
            return Err(AsfError::Contract("backward on an empty tape".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads, store)?;
        }
        Ok(())
    }

    fn backward_node(
        &self,
        i: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        store: &mut ParamStore,
    ) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => store.accumulate_grad(*id, g),
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let n = node.value.shape()[1];
                let da = acc(grads, *a, m * k);
                kernels::matmul_a_bt_into(g, self.value(*b).data(), da, m, n, k);
                let db = acc(grads, *b, k * n);
                kernels::matmul_at_b_into(self.value(*a).data(), g, db, m, k, n);
            }
            Op::AddBias(x, bias) => {
                let n = self.value(*bias).len();
                add_into(acc(grads, *x, g.len()), g);
                let db = acc(grads, *bias, n);
                for row in g.chunks(n) {
                    add_into(db, row);
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                add_into(acc(grads, *b, g.len()), g);
            }
            Op::Scale(x, f) => {
                for (d, gv) in acc(grads, *x, g.len()).iter_mut().zip(g) {
                    *d += f * gv;
                }
            }
            Op::Gelu(x) => {
                let xs = self.value(*x).data();
                for ((d, gv), &xv) in acc(grads, *x, g.len()).iter_mut().zip(g).zip(xs) {
                    *d += gv * kernels::gelu_derivative(xv);
                }
            }
            Op::Sigmoid(x) => {
                let ys = node.value.data();
                for ((d, gv), &y) in acc(grads, *x, g.len()).iter_mut().zip(g).zip(ys) {
                    *d += gv * y * (1.0 - y);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = self.value(*gamma).len();
                let gam = self.value(*gamma).data().to_vec();
                {
                    let dg = acc(grads, *gamma, c);
                    for (row_g, row_h) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            dg[j] += row_g[j] * row_h[j];
                        }
                    }
                }
                {
                    let db = acc(grads, *beta, c);
                    for row_g in g.chunks(c) {
                        add_into(db, row_g);
                    }
                }
                let dx = acc(grads, *x, g.len());
                let nf = c as f64;
                let mut dxhat = vec![0.0; c];
                for (r, inv) in inv_std.iter().enumerate() {
                    let row_g = &g[r * c..(r + 1) * c];
                    let row_h = &xhat[r * c..(r + 1) * c];
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..c {
                        dxhat[j] = row_g[j] * gam[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * row_h[j];
                    }
                    for j in 0..c {
                        dx[r * c + j] += inv / nf * (nf * dxhat[j] - s1 - row_h[j] * s2);
                    }
                }
            }
            Op::Softmax(x) => {
                let k = *node.value.shape().last().unwrap_or(&1);
                let dx = acc(grads, *x, g.len());
                for (r, (yr, gr)) in node.value.data().chunks(k).zip(g.chunks(k)).enumerate() {
                    let s: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                    for j in 0..k {
                        dx[r * k + j] += yr[j] * (gr[j] - s);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            } => self.attention_backward(*q, *k, *v, *shape, probs, g, grads),
            Op::Gather { x, index } => {
                let dx = acc(grads, *x, self.value(*x).len());
                for (gv, &ix) in g.iter().zip(index) {
                    if ix != GATHER_ZERO {
                        dx[ix] += gv;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    add_into(acc(grads, *p, n), &g[off..off + n]);
                    off += n;
                }
            }
            Op::PoolRows { x, groups } => {
                let (rows, width) = self.value(*x).dims2()?;
                let dx = acc(grads, *x, rows * width);
                for (j, grp) in groups.iter().enumerate() {
                    let inv = 1.0 / grp.len() as f64;
                    for &r in grp {
                        for c in 0..width {
                            dx[r * width + c] += g[j * width + c] * inv;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                for d in acc(grads, *x, n).iter_mut() {
                    *d += g[0];
                }
            }
            Op::FocalLoss { logits, dlogits } => {
                for (d, dl) in acc(grads, *logits, dlogits.len()).iter_mut().zip(dlogits) {
                    *d += g[0] * dl;
                }
            }
            Op::SmoothL1 { pred, dpred } => {
                for (d, dp) in acc(grads, *pred, dpred.len()).iter_mut().zip(dpred) {
                    *d += g[0] * dp;
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        shape: AttentionShape,
        probs: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let AttentionShape {
            heads,
            groups,
            queries,
            keys,
            width,
        } = shape;
        let d = shape.head_dim();
        let scale = shape.scale();
        let (qv, kv, vv) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut dq = vec![0.0; qv.len()];
        let mut dk = vec![0.0; kv.len()];
        let mut dv = vec![0.0; vv.len()];
        let mut dp = vec![0.0; keys];
        for gi in 0..groups {
            for h in 0..heads {
                for qi in 0..queries {
                    let orow = (gi * queries + qi) * width + h * d;
                    let go = &g[orow..orow + d];
                    let pbase = shape.prob_index(gi, h, qi, 0);
                    let p = &probs[pbase..pbase + keys];
                    for ki in 0..keys {
                        let vrow = (gi * keys + ki) * width + h * d;
                        dp[ki] = kernels::dot(go, &vv[vrow..vrow + d]);
                        for j in 0..d {
                            dv[vrow + j] += p[ki] * go[j];
                        }
                    }
                    let s: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    let qrow = qi * width + h * d;
                    for ki in 0..keys {
                        let ds = p[ki] * (dp[ki] - s) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = (gi * keys + ki) * width + h * d;
                        for j in 0..d {
                            dq[qrow + j] += ds * kv[krow + j];
                            dk[krow + j] += ds * qv[qrow + j];
                        }
                    }
                }
            }
        }
        add_into(acc(grads, q, dq.len()), &dq);
        add_into(acc(grads, k, dk.len()), &dk);
        add_into(acc(grads, v, dv.len()), &dv);
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability clamp used by the focal loss.
pub const FOCAL_EPS: f64 = 1e-7;

/// Focal loss of one logit and its derivative with respect to that logit.
fn focal_from_logit(z: f64, target: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(z);
    let clamped = !(FOCAL_EPS..=1.0 - FOCAL_EPS).contains(&p);
    let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let positive = target >= 0.5;
    let (pt, at, sign) = if positive {
        (p, alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - alpha, -1.0)
    };
    let one_m = 1.0 - pt;
    let loss = -at * one_m.powf(gamma) * pt.ln();
    if clamped {
        return (loss, 0.0);
    }
    // d/dz via dpt/dz = sign·pt·(1−pt)
    let dl_dpt = -at * (-gamma * one_m.powf(gamma - 1.0) * pt.ln() + one_m.powf(gamma) / pt);
    (loss, dl_dpt * sign * pt * one_m)
}
