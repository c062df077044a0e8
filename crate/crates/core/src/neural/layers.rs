//! Parameter-light layers: ReLU, dropout, global average pooling, linear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::param::{join, Mode, Param, Visitor};
use super::tensor::Tensor4;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    masks: Vec<Vec<bool>>,
}

impl Relu {
    pub fn forward<T: Scalar>(&mut self, mut xs: Vec<Tensor4<T>>, mode: Mode) -> Vec<Tensor4<T>> {
        if mode == Mode::Train {
            self.masks = xs.iter().map(|x| x.data().iter().map(|v| *v > T::zero()).collect()).collect();
        }
        for x in &mut xs {
            for v in x.data_mut() {
                *v = v.max(T::zero());
            }
        }
        xs
    }

    pub fn backward<T: Scalar>(&mut self, mut gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let masks = std::mem::take(&mut self.masks);
        assert_eq!(masks.len(), gys.len(), "Relu::backward without a matching training forward");
        for (g, m) in gys.iter_mut().zip(&masks) {
            for (v, keep) in g.data_mut().iter_mut().zip(m) {
                if !keep {
                    *v = T::zero();
                }
            }
        }
        gys
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 − rate)` during
/// training; evaluation is the identity. Masks are drawn from the seed set
/// with [`Dropout::reseed`].
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    masks: Vec<Vec<bool>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(0),
            masks: Vec::new(),
        }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward<T: Scalar>(&mut self, mut xs: Vec<Tensor4<T>>, mode: Mode) -> Vec<Tensor4<T>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            return xs;
        }
        let scale = T::of(1.0 / (1.0 - self.rate));
        self.masks.clear();
        for x in &mut xs {
            let mask: Vec<bool> = (0..x.len()).map(|_| !self.rng.random_bool(self.rate)).collect();
            for (v, keep) in x.data_mut().iter_mut().zip(&mask) {
                *v = if *keep { *v * scale } else { T::zero() };
            }
            self.masks.push(mask);
        }
        xs
    }

    pub fn backward<T: Scalar>(&mut self, mut gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        if self.rate == 0.0 {
            return gys;
        }
        let masks = std::mem::take(&mut self.masks);
        assert_eq!(masks.len(), gys.len(), "Dropout::backward without a matching training forward");
        let scale = T::of(1.0 / (1.0 - self.rate));
        for (g, m) in gys.iter_mut().zip(&masks) {
            for (v, keep) in g.data_mut().iter_mut().zip(m) {
                *v = if *keep { *v * scale } else { T::zero() };
            }
        }
        gys
    }
}

/// Averages every channel down to a single voxel.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    shapes: Vec<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward<T: Scalar>(&mut self, xs: &[Tensor4<T>], mode: Mode) -> Vec<Tensor4<T>> {
        if mode == Mode::Train {
            self.shapes = xs.iter().map(|x| x.shape()).collect();
        }
        xs.iter()
            .map(|x| {
                let n = T::of_usize(x.spatial());
                let pooled = (0..x.channels()).map(|c| x.channel(c).iter().copied().sum::<T>() / n).collect();
                Tensor4::from_vec([x.channels(), 1, 1, 1], pooled).expect("pooled shape")
            })
            .collect()
    }

    pub fn backward<T: Scalar>(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let shapes = std::mem::take(&mut self.shapes);
        assert_eq!(shapes.len(), gys.len(), "GlobalAvgPool::backward without a matching training forward");
        shapes
            .iter()
            .zip(&gys)
            .map(|(shape, g)| {
                let mut gx = Tensor4::zeros(*shape);
                let n = T::of_usize(gx.spatial());
                for c in 0..shape[0] {
                    gx.channel_mut(c).fill(g.data()[c] / n);
                }
                gx
            })
            .collect()
    }
}

/// Fully connected map of the flattened input onto a tensor of fixed
/// output shape. Weights `[out][in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_shape: [usize; 4],
    pub weight: Param<T>,
    pub bias: Param<T>,
    inputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_shape: [usize; 4]) -> Self {
        let out: usize = out_shape.iter().product();
        Linear {
            in_features,
            out_shape,
            weight: Param::zeros(&[out, in_features]),
            bias: Param::zeros(&[out]),
            inputs: Vec::new(),
        }
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        self.weight.init_he(self.in_features, rng);
    }

    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let n_in = self.in_features;
        let ys = xs
            .iter()
            .map(|x| {
                if x.len() != n_in {
                    return Err(Error::ShapeMismatch {
                        context: "Linear",
                        detail: format!("expected {n_in} features, got {}", x.len()),
                    });
                }
                let out = self
                    .weight
                    .value
                    .chunks(n_in)
                    .zip(&self.bias.value)
                    .map(|(row, b)| *b + row.iter().zip(x.data()).map(|(w, v)| *w * *v).sum::<T>())
                    .collect();
                Tensor4::from_vec(self.out_shape, out)
            })
            .collect::<Result<Vec<_>>>()?;
        if mode == Mode::Train {
            self.inputs = xs;
        }
        Ok(ys)
    }

    pub fn backward(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let inputs = std::mem::take(&mut self.inputs);
        assert_eq!(inputs.len(), gys.len(), "Linear::backward without a matching training forward");
        let n_in = self.in_features;
        inputs
            .iter()
            .zip(&gys)
            .map(|(x, gy)| {
                let mut gx = vec![T::zero(); n_in];
                for (o, g) in gy.data().iter().enumerate() {
                    self.bias.grad[o] += *g;
                    let row = &self.weight.value[o * n_in..(o + 1) * n_in];
                    let grow = &mut self.weight.grad[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += *g * x.data()[i];
                        gx[i] += *g * row[i];
                    }
                }
                Tensor4::from_vec(x.shape(), gx).expect("input shape")
            })
            .collect()
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "weight"), &mut self.weight);
        v.param(&join(prefix, "bias"), &mut self.bias);
    }
}
