use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{AsfError, Result};

/// Affine layer `x·W + b` with `W` stored `in×out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Xavier-uniform weight, zero bias.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = store.add(
            format!("{name}.w"),
            Tensor::uniform(&[fan_in, fan_out], bound, rng),
        )?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]))?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        g.linear(x, w, b)
    }

    pub fn in_features(&self, store: &ParamStore) -> usize {
        store.value(self.weight).shape()[0]
    }

    pub fn out_features(&self, store: &ParamStore) -> usize {
        store.value(self.weight).shape()[1]
    }
}

/// Layer-norm affine parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn init(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::filled(&[width], 1.0))?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[width]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma)?;
        let beta = g.param(store, self.beta)?;
        g.layer_norm(x, gamma, beta, super::LN_EPS)
    }
}

/// Learned Q/K/V/output projections of one multi-head attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            q: Linear::init(store, &format!("{name}.q"), width, width, rng)?,
            k: Linear::init(store, &format!("{name}.k"), width, width, rng)?,
            v: Linear::init(store, &format!("{name}.v"), width, width, rng)?,
            out: Linear::init(store, &format!("{name}.o"), width, width, rng)?,
        })
    }

    pub fn width(&self, store: &ParamStore) -> usize {
        self.q.in_features(store)
    }
}

/// Result of a grouped cross-attention call.
pub struct AttentionOutput {
    /// `(groups·queries)×width`, after the output projection.
    pub out: Var,
    /// Attention probabilities `[groups][heads][queries][keys]`.
    pub probs: Vec<f64>,
    pub heads: usize,
    pub groups: usize,
    pub queries: usize,
    pub keys: usize,
}

impl AttentionOutput {
    pub fn prob(&self, g: usize, h: usize, q: usize, k: usize) -> f64 {
        self.probs[((g * self.heads + h) * self.queries + q) * self.keys + k]
    }

    /// Score tensor `[heads][groups·queries][keys]` for `groups == 1` callers.
    pub fn scores(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.heads, self.groups * self.queries, self.keys]);
        for g in 0..self.groups {
            for h in 0..self.heads {
                for q in 0..self.queries {
                    for k in 0..self.keys {
                        t.set(&[h, g * self.queries + q, k], self.prob(g, h, q, k));
                    }
                }
            }
        }
        t
    }
}

/// Cross-attention of a shared query block against `groups` independent key
/// sets stacked in `kv` (each group's `keys` rows contiguous).
pub fn grouped_cross_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &AttentionParams,
    q: Var,
    kv: Var,
    heads: usize,
    groups: usize,
) -> Result<AttentionOutput> {
    let (queries, width) = g.value(q).dims2()?;
    let (rows, kw) = g.value(kv).dims2()?;
    if kw != width {
        return Err(AsfError::Dimension(format!(
            "query width {width} vs key width {kw}"
        )));
    }
    if groups == 0 || rows % groups != 0 {
        return Err(AsfError::Dimension(format!(
            "{rows} key rows do not split into {groups} groups"
        )));
    }
    super::kernels::AttentionShape::validate(width, heads, rows / groups)?;
    let qp = params.q.forward(g, store, q)?;
    let kp = params.k.forward(g, store, kv)?;
    let vp = params.v.forward(g, store, kv)?;
    let (mixed, probs) = g.attention(qp, kp, vp, heads, groups)?;
    let out = params.out.forward(g, store, mixed)?;
    Ok(AttentionOutput {
        out,
        probs,
        heads,
        groups,
        queries,
        keys: rows / groups,
    })
}

/// Standard multi-head cross-attention: `q` is `Nq×C`, `kv` is `Nk×C`.
///
/// Returns the projected output and the per-head score matrices
/// `[heads][Nq][Nk]`.
pub fn multi_head_cross_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &AttentionParams,
    q: Var,
    kv: Var,
    heads: usize,
) -> Result<(Var, Tensor)> {
    let out = grouped_cross_attention(g, store, params, q, kv, heads, 1)?;
    let scores = out.scores();
    Ok((out.out, scores))
}
