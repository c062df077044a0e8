use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

/// Whether a forward pass records what its backward pass needs and uses
/// batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(v);
        p
    }

    /// He-normal: zero mean, standard deviation `sqrt(2 / fan_in)`.
    pub fn init_he(&mut self, fan_in: usize, rng: &mut impl Rng) {
        let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("finite std");
        for v in &mut self.value {
            *v = T::of(normal.sample(rng));
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Walks every parameter and non-trainable buffer of a model in a fixed
/// order under hierarchical names.
pub trait Visitor<T> {
    fn param(&mut self, name: &str, param: &mut Param<T>);

    fn buffer(&mut self, _name: &str, _values: &mut Vec<T>) {}
}

impl<T, F: FnMut(&str, &mut Param<T>)> Visitor<T> for F {
    fn param(&mut self, name: &str, param: &mut Param<T>) {
        self(name, param)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
