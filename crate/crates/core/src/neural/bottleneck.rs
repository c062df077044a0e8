use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;

use super::conv::{Conv3d, ConvGeometry};
use super::eca::EcaModule;
use super::layers::Relu;
use super::norm::BatchNorm3d;
use super::param::{join, Mode, Visitor};
use super::tensor::Tensor4;

/// Residual reduce / 3×3×3 / expand unit followed by channel attention.
#[derive(Debug, Clone)]
pub struct BottleneckBlock<T> {
    pub in_channels: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    conv1: Conv3d<T>,
    bn1: BatchNorm3d<T>,
    relu1: Relu,
    conv2: Conv3d<T>,
    bn2: BatchNorm3d<T>,
    relu2: Relu,
    conv3: Conv3d<T>,
    bn3: BatchNorm3d<T>,
    downsample: Option<(Conv3d<T>, BatchNorm3d<T>)>,
    relu_out: Relu,
    pub eca: EcaModule<T>,
}

impl<T: Scalar> BottleneckBlock<T> {
    pub fn new(in_channels: usize, mid_channels: usize, out_channels: usize, stride: usize) -> Self {
        let downsample = (stride != 1 || in_channels != out_channels).then(|| {
            let g = ConvGeometry {
                stride: [stride; 3],
                ..ConvGeometry::POINTWISE
            };
            (Conv3d::new(in_channels, out_channels, g, false), BatchNorm3d::new(out_channels))
        });
        BottleneckBlock {
            in_channels,
            mid_channels,
            out_channels,
            stride,
            conv1: Conv3d::new(in_channels, mid_channels, ConvGeometry::POINTWISE, false),
            bn1: BatchNorm3d::new(mid_channels),
            relu1: Relu::default(),
            conv2: Conv3d::new(mid_channels, mid_channels, ConvGeometry::cube(3, stride, 1), false),
            bn2: BatchNorm3d::new(mid_channels),
            relu2: Relu::default(),
            conv3: Conv3d::new(mid_channels, out_channels, ConvGeometry::POINTWISE, false),
            bn3: BatchNorm3d::new(out_channels),
            downsample,
            relu_out: Relu::default(),
            eca: EcaModule::new(out_channels),
        }
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        self.conv1.init_he(rng);
        self.conv2.init_he(rng);
        self.conv3.init_he(rng);
        if let Some((conv, _)) = &mut self.downsample {
            conv.init_he(rng);
        }
    }

    pub fn has_downsample(&self) -> bool {
        self.downsample.is_some()
    }

    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let skip = match &mut self.downsample {
            Some((conv, bn)) => bn.forward(conv.forward(xs.clone(), mode)?, mode)?,
            None => xs.clone(),
        };
        let h = self.relu1.forward(self.bn1.forward(self.conv1.forward(xs, mode)?, mode)?, mode);
        let h = self.relu2.forward(self.bn2.forward(self.conv2.forward(h, mode)?, mode)?, mode);
        let mut h = self.bn3.forward(self.conv3.forward(h, mode)?, mode)?;
        for (a, b) in h.iter_mut().zip(&skip) {
            a.add_assign(b);
        }
        let h = self.relu_out.forward(h, mode);
        self.eca.forward(h, mode)
    }

    pub fn backward(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let g = self.relu_out.backward(self.eca.backward(gys));
        let g_skip = match &mut self.downsample {
            Some((conv, bn)) => conv.backward(bn.backward(g.clone())),
            None => g.clone(),
        };
        let g = self.conv3.backward(self.bn3.backward(g));
        let g = self.conv2.backward(self.bn2.backward(self.relu2.backward(g)));
        let mut gx = self.conv1.backward(self.bn1.backward(self.relu1.backward(g)));
        for (a, b) in gx.iter_mut().zip(&g_skip) {
            a.add_assign(b);
        }
        gx
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
        self.conv3.visit(&join(prefix, "conv3"), v);
        self.bn3.visit(&join(prefix, "bn3"), v);
        if let Some((conv, bn)) = &mut self.downsample {
            conv.visit(&join(prefix, "downsample.conv"), v);
            bn.visit(&join(prefix, "downsample.bn"), v);
        }
        self.eca.visit(&join(prefix, "eca"), v);
    }
}
