//! Pure tensor kernels. These never record anything; the [`Graph`](super::Graph)
//! wraps them with backward rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Tensor;
use crate::error::{AsfError, Result};

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(AsfError::Dimension(format!(
            "matmul inner extents differ: {m}×{k} · {k2}×{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(vec![m, n], out)
}

/// Accumulates `a[m×k] · b[k×n]` into `out`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Accumulates `aᵀ · b` where `a` is `m×k` and `b` is `m×n`, giving `k×n`.
pub(crate) fn matmul_at_b_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Accumulates `a · bᵀ` where `a` is `m×n` and `b` is `k×n`, giving `m×k`.
pub(crate) fn matmul_a_bt_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(arow, brow);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard normal CDF, exact erf form.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

/// Elementwise `x·Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| gelu_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Layer-norm intermediates kept for the backward pass.
pub(crate) struct LayerNormParts {
    pub out: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_parts(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<LayerNormParts> {
    let c = *x
        .shape()
        .last()
        .ok_or_else(|| AsfError::Dimension("layer_norm on a scalar".into()))?;
    if gamma.len() != c || beta.len() != c {
        return Err(AsfError::Dimension(format!(
            "layer_norm width {c} but gamma/beta have {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    let rows = x.len() / c.max(1);
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x.data()[r * c..(r + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std[r] = inv;
        for j in 0..c {
            let h = (row[j] - mean) * inv;
            xhat[r * c + j] = h;
            out[r * c + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    Ok(LayerNormParts { out, xhat, inv_std })
}

/// Normalizes each row over the last axis, then applies `gamma`/`beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let parts = layer_norm_parts(x, gamma, beta, eps)?;
    Tensor::new(x.shape().to_vec(), parts.out)
}

/// In-place max-subtracted softmax over one row.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let k = *x
        .shape()
        .last()
        .ok_or_else(|| AsfError::Dimension("softmax on a scalar".into()))?;
    if k == 0 {
        return Err(AsfError::Dimension("softmax over an empty axis".into()));
    }
    let mut data = x.data().to_vec();
    for row in data.chunks_mut(k) {
        softmax_in_place(row);
    }
    Tensor::new(x.shape().to_vec(), data)
}

/// Geometry of a grouped multi-head attention call.
///
/// `groups` independent key sets of `keys` rows each share one query block of
/// `queries` rows. With `groups == 1` this is ordinary cross-attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionShape {
    pub heads: usize,
    pub groups: usize,
    pub queries: usize,
    pub keys: usize,
    pub width: usize,
}

impl AttentionShape {
    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    pub fn score_evals(&self) -> u64 {
        (self.groups * self.queries * self.keys) as u64
    }

    /// Offset of probability `(g, h, q, k)` in the flat probability buffer.
    pub fn prob_index(&self, g: usize, h: usize, q: usize, k: usize) -> usize {
        ((g * self.heads + h) * self.queries + q) * self.keys + k
    }

    pub fn validate(width: usize, heads: usize, keys: usize) -> Result<()> {
        if heads == 0 || width % heads != 0 {
            return Err(AsfError::Config(format!(
                "width {width} is not divisible by {heads} heads"
            )));
        }
        if keys == 0 {
            return Err(AsfError::EmptyKeys);
        }
        Ok(())
    }
}

/// Scaled dot-product attention over already-projected `q`, `k`, `v`.
///
/// Returns the concatenated head outputs (`groups·queries × width`) and the
/// attention probabilities laid out as `[groups][heads][queries][keys]`.
pub(crate) fn attention_core(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    shape: AttentionShape,
) -> (Vec<f64>, Vec<f64>) {
    let AttentionShape {
        heads,
        groups,
        queries,
        keys,
        width,
    } = shape;
    let d = shape.head_dim();
    let scale = shape.scale();
    let mut out = vec![0.0; groups * queries * width];
    let mut probs = vec![0.0; groups * heads * queries * keys];
    let mut scores = vec![0.0; keys];
    for g in 0..groups {
        for h in 0..heads {
            for qi in 0..queries {
                let qrow = &q[qi * width + h * d..qi * width + (h + 1) * d];
                for (ki, s) in scores.iter_mut().enumerate() {
                    let krow = (g * keys + ki) * width + h * d;
                    *s = dot(qrow, &k[krow..krow + d]) * scale;
                }
                softmax_in_place(&mut scores);
                let base = shape.prob_index(g, h, qi, 0);
                probs[base..base + keys].copy_from_slice(&scores);
                let orow = (g * queries + qi) * width + h * d;
                for (ki, &p) in scores.iter().enumerate() {
                    let vrow = (g * keys + ki) * width + h * d;
                    for j in 0..d {
                        out[orow + j] += p * v[vrow + j];
                    }
                }
            }
        }
    }
    (out, probs)
}
