use std::collections::HashMap;

use super::graph::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn from_index(i: usize) -> Self {
        ParamId(i)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named trainable tensors with gradient accumulators and Adam moments.
/// Iteration order is insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.entries.len());
        let zeros = Tensor::zeros(value.shape());
        self.entries.push(Entry {
            name: name.to_string(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    /// Number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Adam steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `scale * grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) -> Result<()> {
        for (id, g) in grads.iter() {
            let entry = self
                .entries
                .get_mut(id.0)
                .ok_or_else(|| Error::Checkpoint(format!("gradient for unknown parameter {}", id.0)))?;
            if entry.grad.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    name: entry.name.clone(),
                    expected: entry.grad.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
            for (a, b) in entry.grad.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    /// Euclidean norm of the accumulated gradient over `ids`.
    pub fn grad_norm<'a>(&self, ids: impl IntoIterator<Item = &'a ParamId>) -> f64 {
        ids.into_iter()
            .map(|id| self.entries[id.0].grad.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// `(name, value)` pairs in insertion order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Overwrites values from `(name, tensor)` records. Every parameter must be
    /// present with a matching shape, and no unknown names are allowed.
    pub fn load_values(&mut self, records: Vec<(String, Tensor)>) -> Result<()> {
        if records.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                records.len()
            )));
        }
        for (name, t) in records {
            let id = self
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
            let entry = &mut self.entries[id.0];
            if entry.value.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: entry.value.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            entry.value = t;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient, applied as `l2 * θ` added to the gradient.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 5e-6,
        }
    }
}

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for e in &mut store.entries {
        let n = e.value.len();
        let (value, grad) = (e.value.data_mut(), e.grad.data());
        let (m, v) = (e.m.data_mut(), e.v.data_mut());
        for i in 0..n {
            let g = grad[i] + cfg.l2 * value[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::vector(vec![x])).unwrap();
        (s, id)
    }

    fn set_grad(s: &mut ParamStore, id: ParamId, g: f64) {
        s.entries[id.0].grad.data_mut()[0] = g;
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(matches!(s.add("x", Tensor::scalar(0.0)), Err(Error::DuplicateParam(_))));
    }

    #[test]
    fn zero_gradient_without_l2_leaves_params_unchanged() {
        let (mut s, id) = scalar_store(0.75);
        let cfg = AdamConfig { l2: 0.0, ..AdamConfig::default() };
        for _ in 0..10 {
            adam_step(&mut s, &cfg);
        }
        assert_eq!(s.value(id).data()[0], 0.75);
    }

    #[test]
    fn trajectory_matches_closed_form_recurrence() {
        let grads = [0.5, -1.0, 2.0, 0.25, -0.75];
        let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, l2: 0.0 };
        let (mut s, id) = scalar_store(1.0);

        // hand-unrolled: m_t = (1-b1) Σ b1^{t-k} g_k, v_t likewise
        let mut x = 1.0f64;
        for t in 1..=grads.len() {
            let m: f64 = (1..=t).map(|k| (1.0 - 0.9) * 0.9f64.powi((t - k) as i32) * grads[k - 1]).sum();
            let v: f64 = (1..=t)
                .map(|k| (1.0 - 0.999) * 0.999f64.powi((t - k) as i32) * grads[k - 1] * grads[k - 1])
                .sum();
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32));
            x -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);

            set_grad(&mut s, id, grads[t - 1]);
            adam_step(&mut s, &cfg);
            assert!((s.value(id).data()[0] - x).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn l2_alone_shrinks_magnitude() {
        for start in [2.0, -3.0] {
            let (mut s, id) = scalar_store(start);
            let cfg = AdamConfig { l2: 5e-6, ..AdamConfig::default() };
            let mut prev = start.abs();
            for _ in 0..20 {
                adam_step(&mut s, &cfg);
                let now = s.value(id).data()[0].abs();
                assert!(now < prev);
                prev = now;
            }
        }
    }

    #[test]
    fn load_values_checks_names_and_shapes() {
        let (mut s, _) = scalar_store(1.0);
        let bad_shape = vec![("x".to_string(), Tensor::vector(vec![1.0, 2.0]))];
        assert!(matches!(s.load_values(bad_shape), Err(Error::ShapeMismatch { .. })));
        let unknown = vec![("y".to_string(), Tensor::vector(vec![1.0]))];
        assert!(s.load_values(unknown).is_err());
    }
}
