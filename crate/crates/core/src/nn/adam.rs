//! Adam optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{Gradients, RecurrentModel};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates for the trainable parameters of one
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

/// One Adam update of a single scalar; returns `(θ, m, v)`.
pub fn adam_update(theta: f64, g: f64, m: f64, v: f64, step: u64, cfg: &AdamConfig) -> (f64, f64, f64) {
    let m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    let v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    let m_hat = m / (1.0 - cfg.beta1.powi(step as i32));
    let v_hat = v / (1.0 - cfg.beta2.powi(step as i32));
    (theta - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon), m, v)
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Drops moments of parameters that are now frozen.
    pub fn retain_trainable(&mut self, model: &RecurrentModel<T>) {
        let trainable: Vec<String> = model
            .parameters()
            .into_iter()
            .filter(|p| !model.is_frozen(p.layer))
            .map(|p| p.name)
            .collect();
        self.m.retain(|k, _| trainable.contains(k));
        self.v.retain(|k, _| trainable.contains(k));
    }

    /// Applies one optimizer step. Frozen layers are never touched, even if
    /// `grads` carries entries for them.
    pub fn step(&mut self, model: &mut RecurrentModel<T>, grads: &Gradients<T>) -> Result<()> {
        self.config.validate()?;
        self.step += 1;
        let cfg = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let frozen = model.frozen().to_vec();
        for block in model.parameters_mut() {
            if frozen[block.layer] {
                continue;
            }
            let Some(g) = grads.get(&block.name) else {
                continue;
            };
            if g.len() != block.values.len() {
                return Err(Error::Shape(format!(
                    "gradient for {} has {} entries, parameter has {}",
                    block.name,
                    g.len(),
                    block.values.len()
                )));
            }
            let n = g.len();
            let m = self.m.entry(block.name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let v = self.v.entry(block.name).or_insert_with(|| vec![T::zero(); n]);
            let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
            let (ob1, ob2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
            let (c1, c2) = (T::of(c1), T::of(c2));
            let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.epsilon));
            for (((theta, &g), m), v) in block.values.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
