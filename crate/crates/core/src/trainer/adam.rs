//! Adam optimizer with decoupled weight decay.
//!
//! Weight decay multiplies parameters directly before the moment-based
//! update is applied, so decay strength does not leak into the adaptive
//! denominators.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grad::GradientMap;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct Adam {
    cfg: AdamConfig,
    steps: u64,
    slots: BTreeMap<String, Slot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, steps: 0, slots: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. `params` is the model's full named-parameter
    /// view; every parameter must have a gradient entry (zero for
    /// parameters the step's graph never touched).
    pub fn step(
        &mut self,
        params: Vec<(String, &mut Tensor)>,
        grads: &GradientMap,
    ) -> Result<()> {
        self.steps += 1;
        let t = self.steps as i32;
        let c = &self.cfg;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (name, tensor) in params {
            let grad = grads
                .get(&name)
                .ok_or_else(|| Error::UnknownVariable(format!("no gradient for '{}'", name)))?;
            if grad.shape() != tensor.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam step",
                    detail: format!(
                        "parameter '{}' is {:?} but its gradient is {:?}",
                        name,
                        tensor.shape(),
                        grad.shape()
                    ),
                });
            }
            let slot = self.slots.entry(name.clone()).or_insert_with(|| Slot {
                m: vec![0.0; tensor.numel()],
                v: vec![0.0; tensor.numel()],
            });
            let data = tensor.data_mut();
            for (i, g) in grad.data().iter().enumerate() {
                if c.weight_decay != 0.0 {
                    data[i] -= c.lr * c.weight_decay * data[i];
                }
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g;
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = slot.m[i] / bias1;
                let v_hat = slot.v[i] / bias2;
                data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
            if !tensor.is_finite() {
                return Err(Error::NonFinite { context: format!("parameter '{}' after update", name) });
            }
        }
        Ok(())
    }
}
