use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::param::{join, Mode, Param, Visitor};
use super::tensor::Tensor4;

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

/// Per-channel normalisation over batch and all spatial positions.
#[derive(Debug, Clone)]
pub struct BatchNorm3d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    normalized: Vec<Tensor4<T>>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm3d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm3d {
            channels,
            gamma: Param::filled(&[channels], T::one()),
            beta: Param::zeros(&[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    pub fn forward(&mut self, mut xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        if let Some(x) = xs.iter().find(|x| x.channels() != self.channels) {
            return Err(Error::ShapeMismatch {
                context: "BatchNorm3d",
                detail: format!("expected {} channels, got {}", self.channels, x.channels()),
            });
        }
        let eps = T::of(BATCH_NORM_EPS);
        match mode {
            Mode::Eval => {
                for c in 0..self.channels {
                    let scale = self.gamma.value[c] / (self.running_var[c] + eps).sqrt();
                    let shift = self.beta.value[c] - self.running_mean[c] * scale;
                    for x in &mut xs {
                        for v in x.channel_mut(c) {
                            *v = *v * scale + shift;
                        }
                    }
                }
                Ok(xs)
            }
            Mode::Train => {
                let count = xs.iter().map(|x| x.spatial()).sum::<usize>();
                let n = T::of_usize(count);
                let momentum = T::of(BATCH_NORM_MOMENTUM);
                let mut inv_std = Vec::with_capacity(self.channels);
                for c in 0..self.channels {
                    let mean = xs.iter().flat_map(|x| x.channel(c)).copied().sum::<T>() / n;
                    let var = xs
                        .iter()
                        .flat_map(|x| x.channel(c))
                        .map(|v| (*v - mean) * (*v - mean))
                        .sum::<T>()
                        / n;
                    let istd = T::one() / (var + eps).sqrt();
                    for x in &mut xs {
                        for v in x.channel_mut(c) {
                            *v = (*v - mean) * istd;
                        }
                    }
                    let unbiased = if count > 1 { var * n / (n - T::one()) } else { var };
                    self.running_mean[c] = (T::one() - momentum) * self.running_mean[c] + momentum * mean;
                    self.running_var[c] = (T::one() - momentum) * self.running_var[c] + momentum * unbiased;
                    inv_std.push(istd);
                }
                let ys = xs
                    .iter()
                    .map(|xh| {
                        let mut y = xh.clone();
                        for c in 0..self.channels {
                            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
                            for v in y.channel_mut(c) {
                                *v = *v * g + b;
                            }
                        }
                        y
                    })
                    .collect();
                self.cache = Some(Cache {
                    normalized: xs,
                    inv_std,
                });
                Ok(ys)
            }
        }
    }

    pub fn backward(&mut self, mut gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let cache = self.cache.take().expect("BatchNorm3d::backward without a training forward");
        let n = T::of_usize(cache.normalized.iter().map(|x| x.spatial()).sum());
        for c in 0..self.channels {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for (gy, xh) in gys.iter().zip(&cache.normalized) {
                for (g, x) in gy.channel(c).iter().zip(xh.channel(c)) {
                    sum_g += *g;
                    sum_gx += *g * *x;
                }
            }
            self.beta.grad[c] += sum_g;
            self.gamma.grad[c] += sum_gx;
            let k = self.gamma.value[c] * cache.inv_std[c] / n;
            for (gy, xh) in gys.iter_mut().zip(&cache.normalized) {
                for (g, x) in gy.channel_mut(c).iter_mut().zip(xh.channel(c)) {
                    *g = k * (n * *g - sum_g - *x * sum_gx);
                }
            }
        }
        gys
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "gamma"), &mut self.gamma);
        v.param(&join(prefix, "beta"), &mut self.beta);
        v.buffer(&join(prefix, "running_mean"), &mut self.running_mean);
        v.buffer(&join(prefix, "running_var"), &mut self.running_var);
    }
}
