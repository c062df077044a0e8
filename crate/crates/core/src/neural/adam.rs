use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::param::{Param, Visitor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn desk() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn paper() -> Self {
        AdamConfig {
            learning_rate: 1e-6,
            ..Self::desk()
        }
    }
}

/// One bias-corrected Adam update of `value` in place; `step` is the
/// 1-based update count.
pub fn adam_step<T: Scalar>(value: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64, cfg: &AdamConfig) {
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let c1 = T::of(1.0 - cfg.beta1.powf(step as f64));
    let c2 = T::of(1.0 - cfg.beta2.powf(step as f64));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.epsilon);
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam state for a model's parameters, kept in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every parameter reachable through `visit`.
    pub fn update(&mut self, visit: impl FnOnce(&mut dyn Visitor<T>)) {
        self.step += 1;
        let mut apply = Apply {
            adam: self,
            index: 0,
        };
        visit(&mut apply);
    }
}

struct Apply<'a, T> {
    adam: &'a mut Adam<T>,
    index: usize,
}

impl<T: Scalar> Visitor<T> for Apply<'_, T> {
    fn param(&mut self, _: &str, p: &mut Param<T>) {
        let a = &mut *self.adam;
        if a.m.len() == self.index {
            a.m.push(vec![T::zero(); p.len()]);
            a.v.push(vec![T::zero(); p.len()]);
        }
        adam_step(&mut p.value, &p.grad, &mut a.m[self.index], &mut a.v[self.index], a.step, &a.config);
        self.index += 1;
    }
}
