use std::collections::HashMap;

use super::Tensor;
use crate::error::{AsfError, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named trainable tensors with gradient accumulators and AdamW moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(AsfError::Config(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.params.len());
        let zeros = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.clone(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        });
        self.index.insert(name, id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    /// Number of optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let acc = self.params[id.0].grad.data_mut();
        debug_assert_eq!(acc.len(), grad.len());
        for (a, g) in acc.iter_mut().zip(grad) {
            *a += g;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Snapshot of every gradient accumulator, in parameter order.
    pub fn grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.grad.clone()).collect()
    }

    /// Replaces a parameter value, keeping the shape contract.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(AsfError::Dimension(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Named `(name, value)` pairs in registration order.
    pub fn named_values(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Loads values by name. Every stored parameter must be present with a
    /// matching shape; mismatches are reported together.
    pub fn load_named(&mut self, records: &[(String, Tensor)]) -> Result<()> {
        let by_name: HashMap<&str, &Tensor> =
            records.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut diffs = Vec::new();
        for p in &self.params {
            match by_name.get(p.name.as_str()) {
                None => diffs.push(format!("  missing `{}` (expected {:?})", p.name, p.value.shape())),
                Some(t) if t.shape() != p.value.shape() => diffs.push(format!(
                    "  `{}`: checkpoint {:?} vs config {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )),
                Some(_) => {}
            }
        }
        for (name, t) in records {
            if !self.index.contains_key(name) {
                diffs.push(format!("  unexpected `{}` {:?}", name, t.shape()));
            }
        }
        if !diffs.is_empty() {
            return Err(AsfError::Incompatible(diffs.join("\n")));
        }
        for p in &mut self.params {
            p.value = (*by_name[p.name.as_str()]).clone();
        }
        Ok(())
    }
}

/// AdamW hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamW {
    /// One decoupled-weight-decay Adam update; clears gradients afterwards.
    pub fn step(&self, store: &mut ParamStore) {
        store.step += 1;
        let t = store.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for p in &mut store.params {
            let g = p.grad.data();
            let m = p.m.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let v = p.v.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let (m, v) = (p.m.data(), p.v.data());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w = *w * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad.data_mut().fill(0.0);
        }
    }
}

/// Free-function form of [`AdamW::step`].
pub fn adamw_step(
    store: &mut ParamStore,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) {
    AdamW {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    }
    .step(store)
}
