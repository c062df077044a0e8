//! Encoder (stem + bottleneck stages with channel attention + dropout) and
//! decoder (linear seed volume + three transposed-conv upsampling blocks +
//! pointwise logit head).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::voxel::LogitGrid;

use super::bottleneck::BottleneckBlock;
use super::conv::{Conv3d, ConvGeometry, ConvTranspose3d, UpGeometry};
use super::eca::adaptive_kernel_size;
use super::layers::{Dropout, GlobalAvgPool, Linear, Relu};
use super::norm::BatchNorm3d;
use super::param::{join, Mode, Param, Visitor};
use super::tensor::{debug_check, Tensor4};

/// Stem stride: frames keep their temporal resolution, space halves.
pub const STEM_STRIDE: [usize; 3] = [1, 2, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub stem_channels: usize,
    /// Output channels of each stage.
    pub stage_widths: Vec<usize>,
    pub stage_blocks: Vec<usize>,
    /// Stage width divided by the width of the bottleneck's inner convs.
    pub bottleneck_ratio: usize,
    /// Channels of the `(D/8)³` seed volume.
    pub seed_channels: usize,
    pub decoder_channels: [usize; 3],
    /// Voxel resolution D of the logit grid.
    pub resolution: usize,
    pub dropout: f64,
}

impl NetworkConfig {
    pub fn desk() -> Self {
        NetworkConfig {
            stem_channels: 16,
            stage_widths: vec![16, 32],
            stage_blocks: vec![2, 2],
            bottleneck_ratio: 2,
            seed_channels: 32,
            decoder_channels: [16, 8, 4],
            resolution: 32,
            dropout: 0.25,
        }
    }

    /// The ResNet-152 stage layout.
    pub fn paper() -> Self {
        NetworkConfig {
            stem_channels: 64,
            stage_widths: vec![256, 512, 1024, 2048],
            stage_blocks: vec![3, 8, 36, 3],
            bottleneck_ratio: 4,
            seed_channels: 256,
            decoder_channels: [128, 64, 32],
            resolution: 32,
            dropout: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config(format!("network: {reason}")));
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.stage_blocks.len() {
            return bad(format!(
                "{} stage widths for {} block counts",
                self.stage_widths.len(),
                self.stage_blocks.len()
            ));
        }
        if self.stage_blocks.contains(&0) || self.bottleneck_ratio == 0 || self.stem_channels == 0 {
            return bad("block counts, stem channels and bottleneck ratio must be at least 1".into());
        }
        if let Some(w) = self.stage_widths.iter().find(|w| **w < self.bottleneck_ratio) {
            return bad(format!("stage width {w} is below the bottleneck ratio {}", self.bottleneck_ratio));
        }
        if self.seed_channels == 0 || self.decoder_channels.contains(&0) {
            return bad("decoder channel counts must be at least 1".into());
        }
        if self.resolution < 8 || self.resolution % 8 != 0 {
            return bad(format!("resolution {} must be a positive multiple of 8", self.resolution));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Trainable parameter count for `in_channels` input channels, without
    /// building the network.
    pub fn parameter_count(&self, in_channels: usize) -> usize {
        let bn = |c: usize| 2 * c;
        let eca = |c: usize| adaptive_kernel_size(c);
        let mut total = in_channels * self.stem_channels * 27 + bn(self.stem_channels);
        let mut c_in = self.stem_channels;
        for (&width, &blocks) in self.stage_widths.iter().zip(&self.stage_blocks) {
            let mid = width / self.bottleneck_ratio;
            for b in 0..blocks {
                total += c_in * mid + bn(mid) + mid * mid * 27 + bn(mid) + mid * width + bn(width) + eca(width);
                let stride = if b == 0 { 2 } else { 1 };
                if stride != 1 || c_in != width {
                    total += c_in * width + bn(width);
                }
                c_in = width;
            }
        }
        let seed = self.seed_channels * (self.resolution / 8).pow(3);
        total += c_in * seed + seed;
        let mut c = self.seed_channels;
        for &next in &self.decoder_channels {
            total += c * next * UpGeometry::DOUBLING.kernel.pow(3) + bn(next);
            c = next;
        }
        total + c + 1
    }
}

#[derive(Debug, Clone)]
struct UpBlock<T> {
    conv: ConvTranspose3d<T>,
    bn: BatchNorm3d<T>,
    relu: Relu,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    in_channels: usize,
    stem: Conv3d<T>,
    stem_bn: BatchNorm3d<T>,
    stem_relu: Relu,
    stages: Vec<Vec<BottleneckBlock<T>>>,
    dropout: Dropout,
    pool: GlobalAvgPool,
    linear: Linear<T>,
    seed_relu: Relu,
    decoder: Vec<UpBlock<T>>,
    head: Conv3d<T>,
}

impl<T: Scalar> Network<T> {
    /// He-normal convolutions and linear map, zero biases and ECA weights,
    /// unit batch-norm scales; deterministic in `seed`.
    pub fn new(config: &NetworkConfig, in_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(Error::Config("network: input channel count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem_geometry = ConvGeometry {
            kernel: [3; 3],
            stride: STEM_STRIDE,
            padding: [1; 3],
        };
        let mut stem = Conv3d::new(in_channels, config.stem_channels, stem_geometry, false);
        stem.init_he(&mut rng);

        let mut stages = Vec::new();
        let mut c_in = config.stem_channels;
        for (&width, &blocks) in config.stage_widths.iter().zip(&config.stage_blocks) {
            let mid = width / config.bottleneck_ratio;
            let stage = (0..blocks)
                .map(|b| {
                    let mut block = BottleneckBlock::new(if b == 0 { c_in } else { width }, mid, width, if b == 0 { 2 } else { 1 });
                    block.init(&mut rng);
                    block
                })
                .collect();
            stages.push(stage);
            c_in = width;
        }

        let s = config.resolution / 8;
        let mut linear = Linear::new(c_in, [config.seed_channels, s, s, s]);
        linear.init_he(&mut rng);

        let mut decoder = Vec::new();
        let mut c = config.seed_channels;
        for &next in &config.decoder_channels {
            let mut conv = ConvTranspose3d::new(c, next, UpGeometry::DOUBLING);
            conv.init_he(&mut rng);
            decoder.push(UpBlock {
                conv,
                bn: BatchNorm3d::new(next),
                relu: Relu::default(),
            });
            c = next;
        }
        let mut head = Conv3d::new(c, 1, ConvGeometry::POINTWISE, true);
        head.init_he(&mut rng);

        Ok(Network {
            config: config.clone(),
            in_channels,
            stem,
            stem_bn: BatchNorm3d::new(config.stem_channels),
            stem_relu: Relu::default(),
            stages,
            dropout: Dropout::new(config.dropout),
            pool: GlobalAvgPool::default(),
            linear,
            seed_relu: Relu::default(),
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Seeds the dropout mask stream for the next training forward pass.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.dropout.reseed(seed);
    }

    pub fn encoder_forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let mut h = self.stem_relu.forward(self.stem_bn.forward(self.stem.forward(xs, mode)?, mode)?, mode);
        for stage in &mut self.stages {
            for block in stage {
                h = block.forward(h, mode)?;
            }
            debug_check(&h, "encoder stage");
        }
        Ok(self.dropout.forward(h, mode))
    }

    pub fn decoder_forward(&mut self, features: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let pooled = self.pool.forward(&features, mode);
        let mut h = self.seed_relu.forward(self.linear.forward(pooled, mode)?, mode);
        for up in &mut self.decoder {
            h = up.relu.forward(up.bn.forward(up.conv.forward(h, mode)?, mode)?, mode);
        }
        let logits = self.head.forward(h, mode)?;
        debug_check(&logits, "decoder output");
        Ok(logits)
    }

    /// Logit tensors of shape `(1, D, D, D)`, one per input.
    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        if let Some(x) = xs.iter().find(|x| x.channels() != self.in_channels) {
            return Err(Error::ShapeMismatch {
                context: "Network::forward",
                detail: format!("expected {} input channels, got {}", self.in_channels, x.channels()),
            });
        }
        let features = self.encoder_forward(xs, mode)?;
        self.decoder_forward(features, mode)
    }

    /// Accumulates parameter gradients for the last training forward pass
    /// given the gradient of the loss with respect to its logits.
    pub fn backward(&mut self, grad_logits: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let mut g = self.head.backward(grad_logits);
        for up in self.decoder.iter_mut().rev() {
            g = up.conv.backward(up.bn.backward(up.relu.backward(g)));
        }
        let g = self.pool.backward(self.linear.backward(self.seed_relu.backward(g)));
        let mut g = self.dropout.backward(g);
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                g = block.backward(g);
            }
        }
        self.stem.backward(self.stem_bn.backward(self.stem_relu.backward(g)))
    }

    /// Evaluation-mode logits for one input.
    pub fn predict(&mut self, x: Tensor4<T>) -> Result<LogitGrid<T>> {
        let y = self.forward(vec![x], Mode::Eval)?.pop().expect("one output per input");
        LogitGrid::new(self.config.resolution, y.into_vec())
    }

    pub fn visit(&mut self, v: &mut dyn Visitor<T>) {
        self.stem.visit("stem.conv", v);
        self.stem_bn.visit("stem.bn", v);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, block) in stage.iter_mut().enumerate() {
                block.visit(&format!("stage{}.block{}", i + 1, j + 1), v);
            }
        }
        self.linear.visit("decoder.linear", v);
        for (i, up) in self.decoder.iter_mut().enumerate() {
            let prefix = format!("decoder.up{}", i + 1);
            up.conv.visit(&join(&prefix, "conv"), v);
            up.bn.visit(&join(&prefix, "bn"), v);
        }
        self.head.visit("decoder.head", v);
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_: &str, p: &mut Param<T>| p.zero_grad());
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_: &str, p: &mut Param<T>| n += p.len());
        n
    }

    pub fn cast<U: Scalar>(&mut self) -> Network<U> {
        let mut values = Vec::new();
        let mut buffers = Vec::new();
        self.visit(&mut Collect {
            params: &mut values,
            buffers: &mut buffers,
        });
        let mut out = Network::<U>::new(&self.config, self.in_channels, 0).expect("validated config");
        let mut params = values.into_iter();
        let mut bufs = buffers.into_iter();
        out.visit(&mut Restore {
            params: &mut params,
            buffers: &mut bufs,
        });
        out
    }
}

struct Collect<'a> {
    params: &'a mut Vec<Vec<f64>>,
    buffers: &'a mut Vec<Vec<f64>>,
}

impl<T: Scalar> Visitor<T> for Collect<'_> {
    fn param(&mut self, _: &str, p: &mut Param<T>) {
        self.params.push(p.value.iter().map(|v| v.as_f64()).collect());
    }

    fn buffer(&mut self, _: &str, values: &mut Vec<T>) {
        self.buffers.push(values.iter().map(|v| v.as_f64()).collect());
    }
}

struct Restore<'a, I: Iterator<Item = Vec<f64>>> {
    params: &'a mut I,
    buffers: &'a mut I,
}

impl<T: Scalar, I: Iterator<Item = Vec<f64>>> Visitor<T> for Restore<'_, I> {
    fn param(&mut self, _: &str, p: &mut Param<T>) {
        let src = self.params.next().expect("same architecture");
        p.value = src.into_iter().map(T::of).collect();
    }

    fn buffer(&mut self, _: &str, values: &mut Vec<T>) {
        let src = self.buffers.next().expect("same architecture");
        *values = src.into_iter().map(T::of).collect();
    }
}
