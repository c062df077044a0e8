//! Efficient channel attention: global average pooling, a 1D convolution
//! across channels with circular padding, and a sigmoid gate.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

use super::param::{join, Mode, Param, Visitor};
use super::tensor::Tensor4;

/// `k = ⌊|log2(C)/γ + b/γ|⌋`, bumped to the next odd value, with γ = 2 and
/// b = 1.
pub fn adaptive_kernel_size(channels: usize) -> usize {
    let t = ((channels.max(1) as f64).log2() / 2.0 + 0.5).abs();
    let k = t.floor() as usize;
    if k % 2 == 0 {
        k + 1
    } else {
        k
    }
}

/// Per-channel gates `a_c` for one sample given its pooled descriptor.
fn gates<T: Scalar>(pooled: &[T], weight: &[T]) -> Vec<T> {
    let c = pooled.len();
    let half = weight.len() / 2;
    (0..c)
        .map(|ch| {
            let z = weight
                .iter()
                .enumerate()
                .map(|(j, w)| *w * pooled[(ch + c * weight.len() + j - half) % c])
                .sum::<T>();
            sigmoid(z)
        })
        .collect()
}

fn pool<T: Scalar>(x: &Tensor4<T>) -> Vec<T> {
    let n = T::of_usize(x.spatial());
    (0..x.channels()).map(|c| x.channel(c).iter().copied().sum::<T>() / n).collect()
}

/// Output and attention vector for one sample.
pub fn eca_forward<T: Scalar>(x: &Tensor4<T>, weight: &[T]) -> (Tensor4<T>, Vec<T>) {
    let a = gates(&pool(x), weight);
    let mut y = x.clone();
    for (c, g) in a.iter().enumerate() {
        for v in y.channel_mut(c) {
            *v *= *g;
        }
    }
    (y, a)
}

/// Gradients with respect to input and conv weights.
pub fn eca_backward<T: Scalar>(x: &Tensor4<T>, weight: &[T], grad_out: &Tensor4<T>) -> (Tensor4<T>, Vec<T>) {
    let c = x.channels();
    let k = weight.len();
    let half = k / 2;
    let s = pool(x);
    let a = gates(&s, weight);
    let n = T::of_usize(x.spatial());
    let dz: Vec<T> = (0..c)
        .map(|ch| {
            let da = grad_out.channel(ch).iter().zip(x.channel(ch)).map(|(g, v)| *g * *v).sum::<T>();
            da * a[ch] * (T::one() - a[ch])
        })
        .collect();
    let mut grad_w = vec![T::zero(); k];
    let mut ds = vec![T::zero(); c];
    for ch in 0..c {
        for j in 0..k {
            let m = (ch + c * k + j - half) % c;
            grad_w[j] += dz[ch] * s[m];
            ds[m] += dz[ch] * weight[j];
        }
    }
    let mut gx = grad_out.clone();
    for ch in 0..c {
        let through_pool = ds[ch] / n;
        for v in gx.channel_mut(ch) {
            *v = *v * a[ch] + through_pool;
        }
    }
    (gx, grad_w)
}

#[derive(Debug, Clone)]
pub struct EcaModule<T> {
    pub channels: usize,
    pub kernel_size: usize,
    pub weight: Param<T>,
    inputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> EcaModule<T> {
    /// Zero-initialised, so every gate starts at ½.
    pub fn new(channels: usize) -> Self {
        Self::with_kernel(channels, adaptive_kernel_size(channels))
    }

    pub fn with_kernel(channels: usize, kernel_size: usize) -> Self {
        assert!(kernel_size % 2 == 1, "ECA kernel size must be odd");
        EcaModule {
            channels,
            kernel_size,
            weight: Param::zeros(&[kernel_size]),
            inputs: Vec::new(),
        }
    }

    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let mut ys = Vec::with_capacity(xs.len());
        for x in &xs {
            if x.channels() != self.channels {
                return Err(Error::ShapeMismatch {
                    context: "EcaModule",
                    detail: format!("expected {} channels, got {}", self.channels, x.channels()),
                });
            }
            ys.push(eca_forward(x, &self.weight.value).0);
        }
        if mode == Mode::Train {
            self.inputs = xs;
        }
        Ok(ys)
    }

    pub fn backward(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let inputs = std::mem::take(&mut self.inputs);
        assert_eq!(inputs.len(), gys.len(), "EcaModule::backward without a matching training forward");
        inputs
            .iter()
            .zip(&gys)
            .map(|(x, gy)| {
                let (gx, gw) = eca_backward(x, &self.weight.value, gy);
                for (a, b) in self.weight.grad.iter_mut().zip(gw) {
                    *a += b;
                }
                gx
            })
            .collect()
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "weight"), &mut self.weight);
    }
}
