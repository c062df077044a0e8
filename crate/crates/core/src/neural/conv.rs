//! 3D convolution and transposed convolution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::param::{join, Mode, Param, Visitor};
use super::tensor::Tensor4;

/// Kernel, stride and zero padding along (depth, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub const POINTWISE: ConvGeometry = ConvGeometry {
        kernel: [1; 3],
        stride: [1; 3],
        padding: [0; 3],
    };

    pub fn cube(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            kernel: [kernel; 3],
            stride: [stride; 3],
            padding: [padding; 3],
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let padded = input[i] + 2 * self.padding[i];
            if self.stride[i] == 0 || self.kernel[i] == 0 || padded < self.kernel[i] {
                return Err(Error::ShapeMismatch {
                    context: "conv3d",
                    detail: format!("input {input:?} too small for {self:?}"),
                });
            }
            out[i] = (padded - self.kernel[i]) / self.stride[i] + 1;
        }
        Ok(out)
    }
}

/// Cubic kernel, stride and cropping of a transposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl UpGeometry {
    /// Exact doubling with every output voxel fed by 2×2×2 inputs.
    pub const DOUBLING: UpGeometry = UpGeometry {
        kernel: 4,
        stride: 2,
        padding: 1,
    };

    pub fn output_dims(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let out = input.map(|n| (n.max(1) - 1) * self.stride + self.kernel);
        (out.iter().all(|o| *o > 2 * self.padding) && !input.contains(&0)).then(|| out.map(|o| o - 2 * self.padding))
    }
}

/// Output indices `o` in `lo..hi` whose input index `o·s + k − p` lies in
/// `[0, n)`.
#[inline]
fn valid_range(out_n: usize, n: usize, s: usize, p: usize, k: usize) -> (usize, usize) {
    let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
    let hi = if n + p <= k { 0 } else { ((n - 1 + p - k) / s + 1).min(out_n) };
    (lo, hi.max(lo))
}

fn check_conv_input<T: Scalar>(input: &Tensor4<T>, weight: &[T], out_channels: usize, g: &ConvGeometry) -> Result<()> {
    let expected = out_channels * input.channels() * g.kernel_volume();
    if weight.len() != expected {
        return Err(Error::ShapeMismatch {
            context: "conv3d",
            detail: format!(
                "{} weights for {} -> {out_channels} channels with kernel {:?}",
                weight.len(),
                input.channels(),
                g.kernel
            ),
        });
    }
    Ok(())
}

/// Cross-correlation, weights laid out `[out][in][kd][kh][kw]`.
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    out_channels: usize,
    g: &ConvGeometry,
) -> Result<Tensor4<T>> {
    check_conv_input(input, weight, out_channels, g)?;
    let [ci, id, ih, iw] = input.shape();
    let [od, oh, ow] = g.output_dims([id, ih, iw])?;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.padding;
    let mut out = Tensor4::zeros([out_channels, od, oh, ow]);
    let x = input.data();
    let y = out.data_mut();
    let mut widx = 0;
    for oc in 0..out_channels {
        for ic in 0..ci {
            for kz in 0..kd {
                let (z0, z1) = valid_range(od, id, sd, pd, kz);
                for ky in 0..kh {
                    let (y0, y1) = valid_range(oh, ih, sh, ph, ky);
                    for kx in 0..kw {
                        let wv = weight[widx];
                        widx += 1;
                        let (x0, x1) = valid_range(ow, iw, sw, pw, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        for oz in z0..z1 {
                            let iz = oz * sd + kz - pd;
                            for oy in y0..y1 {
                                let iy = oy * sh + ky - ph;
                                let orow = ((oc * od + oz) * oh + oy) * ow;
                                let irow = ((ic * id + iz) * ih + iy) * iw;
                                if sw == 1 {
                                    let src = &x[irow + x0 + kx - pw..irow + x1 + kx - pw];
                                    for (o, v) in y[orow + x0..orow + x1].iter_mut().zip(src) {
                                        *o += wv * *v;
                                    }
                                } else {
                                    for ox in x0..x1 {
                                        y[orow + ox] += wv * x[irow + ox * sw + kx - pw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv3d_forward`] with respect to its input and weights.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    g: &ConvGeometry,
    grad_out: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>) {
    let [ci, id, ih, iw] = input.shape();
    let [co, od, oh, ow] = grad_out.shape();
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.padding;
    let mut grad_in = Tensor4::zeros(input.shape());
    let mut grad_w = vec![T::zero(); weight.len()];
    let x = input.data();
    let gy = grad_out.data();
    let gx = grad_in.data_mut();
    let mut widx = 0;
    for oc in 0..co {
        for ic in 0..ci {
            for kz in 0..kd {
                let (z0, z1) = valid_range(od, id, sd, pd, kz);
                for ky in 0..kh {
                    let (y0, y1) = valid_range(oh, ih, sh, ph, ky);
                    for kx in 0..kw {
                        let wv = weight[widx];
                        let (x0, x1) = valid_range(ow, iw, sw, pw, kx);
                        let mut acc = T::zero();
                        for oz in z0..z1 {
                            let iz = oz * sd + kz - pd;
                            for oy in y0..y1 {
                                let iy = oy * sh + ky - ph;
                                let orow = ((oc * od + oz) * oh + oy) * ow;
                                let irow = ((ic * id + iz) * ih + iy) * iw;
                                for ox in x0..x1 {
                                    let ix = irow + ox * sw + kx - pw;
                                    let go = gy[orow + ox];
                                    acc += go * x[ix];
                                    gx[ix] += wv * go;
                                }
                            }
                        }
                        grad_w[widx] = acc;
                        widx += 1;
                    }
                }
            }
        }
    }
    (grad_in, grad_w)
}

/// Transposed convolution, weights laid out `[in][out][kd][kh][kw]`;
/// output side `(n − 1)·s + k − 2p`.
///
/// Computed as a channel product into one column per (output channel,
/// kernel offset) over the input voxels, then scattered to the output.
pub fn conv_transpose3d_forward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    out_channels: usize,
    geometry: UpGeometry,
) -> Result<Tensor4<T>> {
    let UpGeometry { kernel, stride, padding } = geometry;
    let [ci, id, ih, iw] = input.shape();
    let k3 = kernel.pow(3);
    if weight.len() != ci * out_channels * k3 || stride == 0 || kernel == 0 {
        return Err(Error::ShapeMismatch {
            context: "conv_transpose3d",
            detail: format!("{} weights for {ci} -> {out_channels} channels, kernel {kernel}", weight.len()),
        });
    }
    let [od, oh, ow] = geometry.output_dims([id, ih, iw]).ok_or_else(|| Error::ShapeMismatch {
        context: "conv_transpose3d",
        detail: format!("padding {padding} leaves no output for input {id}x{ih}x{iw}"),
    })?;
    let n = id * ih * iw;
    let rows = out_channels * k3;
    let x = input.data();
    let mut cols = vec![T::zero(); rows * n];
    for ic in 0..ci {
        let xc = &x[ic * n..(ic + 1) * n];
        for (r, col) in cols.chunks_exact_mut(n).enumerate() {
            let wv = weight[ic * rows + r];
            for (c, v) in col.iter_mut().zip(xc) {
                *c += wv * *v;
            }
        }
    }

    let taps = Taps::new([id, ih, iw], [od, oh, ow], geometry);
    let mut out = Tensor4::zeros([out_channels, od, oh, ow]);
    let y = out.data_mut();
    for (r, col) in cols.chunks_exact(n).enumerate() {
        let (oc, kk) = (r / k3, r % k3);
        let yc = &mut y[oc * od * oh * ow..(oc + 1) * od * oh * ow];
        taps.for_each(kk, |i, o| yc[o] += col[i]);
    }
    Ok(out)
}

pub fn conv_transpose3d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    geometry: UpGeometry,
    grad_out: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>) {
    let k3 = geometry.kernel.pow(3);
    let [ci, id, ih, iw] = input.shape();
    let [co, od, oh, ow] = grad_out.shape();
    let n = id * ih * iw;
    let rows = co * k3;
    let taps = Taps::new([id, ih, iw], [od, oh, ow], geometry);
    let gy = grad_out.data();
    let mut gcols = vec![T::zero(); rows * n];
    for (r, col) in gcols.chunks_exact_mut(n).enumerate() {
        let (oc, kk) = (r / k3, r % k3);
        let g = &gy[oc * od * oh * ow..(oc + 1) * od * oh * ow];
        taps.for_each(kk, |i, o| col[i] = g[o]);
    }

    let x = input.data();
    let mut grad_in = Tensor4::zeros(input.shape());
    let mut grad_w = vec![T::zero(); weight.len()];
    let gx = grad_in.data_mut();
    for ic in 0..ci {
        let xc = &x[ic * n..(ic + 1) * n];
        let gxc = &mut gx[ic * n..(ic + 1) * n];
        for (r, col) in gcols.chunks_exact(n).enumerate() {
            let wv = weight[ic * rows + r];
            let mut acc = T::zero();
            for ((g, v), gxv) in col.iter().zip(xc).zip(gxc.iter_mut()) {
                acc += *g * *v;
                *gxv += wv * *g;
            }
            grad_w[ic * rows + r] = acc;
        }
    }
    (grad_in, grad_w)
}

/// Per axis and kernel offset, the `(input index, output index)` pairs
/// with `o = i·s + k − p` inside the output.
struct Taps {
    axes: [Vec<Vec<(usize, usize)>>; 3],
    input: [usize; 3],
    output: [usize; 3],
    kernel: usize,
}

impl Taps {
    fn new(input: [usize; 3], output: [usize; 3], g: UpGeometry) -> Self {
        let axis = |n: usize, out: usize| -> Vec<Vec<(usize, usize)>> {
            (0..g.kernel)
                .map(|k| {
                    (0..n)
                        .filter_map(|i| (i * g.stride + k).checked_sub(g.padding).filter(|o| *o < out).map(|o| (i, o)))
                        .collect()
                })
                .collect()
        };
        Taps {
            axes: [axis(input[0], output[0]), axis(input[1], output[1]), axis(input[2], output[2])],
            input,
            output,
            kernel: g.kernel,
        }
    }

    /// Calls `f(input voxel, output voxel)` with flat indices within one
    /// channel, for the flat kernel offset `kk`.
    #[inline]
    fn for_each(&self, kk: usize, mut f: impl FnMut(usize, usize)) {
        let k = self.kernel;
        let (kz, ky, kx) = (kk / (k * k), (kk / k) % k, kk % k);
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        for &(iz, oz) in &self.axes[0][kz] {
            for &(iy, oy) in &self.axes[1][ky] {
                let (irow, orow) = ((iz * ih + iy) * iw, (oz * oh + oy) * ow);
                for &(ix, ox) in &self.axes[2][kx] {
                    f(irow + ix, orow + ox);
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(t: &mut Tensor4<T>, bias: &[T]) {
    for (c, b) in bias.iter().enumerate() {
        for v in t.channel_mut(c) {
            *v += *b;
        }
    }
}

fn accumulate_bias_grad<T: Scalar>(grad: &mut [T], gy: &Tensor4<T>) {
    for (c, g) in grad.iter_mut().enumerate() {
        *g += gy.channel(c).iter().copied().sum::<T>();
    }
}

#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    inputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: ConvGeometry, bias: bool) -> Self {
        let [kd, kh, kw] = geometry.kernel;
        Conv3d {
            in_channels,
            out_channels,
            geometry,
            weight: Param::zeros(&[out_channels, in_channels, kd, kh, kw]),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            inputs: Vec::new(),
        }
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        self.weight.init_he(self.in_channels * self.geometry.kernel_volume(), rng);
    }

    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let mut ys = Vec::with_capacity(xs.len());
        for x in &xs {
            if x.channels() != self.in_channels {
                return Err(Error::ShapeMismatch {
                    context: "Conv3d",
                    detail: format!("expected {} input channels, got {}", self.in_channels, x.channels()),
                });
            }
            let mut y = conv3d_forward(x, &self.weight.value, self.out_channels, &self.geometry)?;
            if let Some(b) = &self.bias {
                add_bias(&mut y, &b.value);
            }
            ys.push(y);
        }
        if mode == Mode::Train {
            self.inputs = xs;
        }
        Ok(ys)
    }

    pub fn backward(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let inputs = std::mem::take(&mut self.inputs);
        assert_eq!(inputs.len(), gys.len(), "Conv3d::backward without a matching training forward");
        inputs
            .iter()
            .zip(&gys)
            .map(|(x, gy)| {
                let (gx, gw) = conv3d_backward(x, &self.weight.value, &self.geometry, gy);
                for (a, b) in self.weight.grad.iter_mut().zip(gw) {
                    *a += b;
                }
                if let Some(b) = &mut self.bias {
                    accumulate_bias_grad(&mut b.grad, gy);
                }
                gx
            })
            .collect()
    }

    pub fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            v.param(&join(prefix, "bias"), b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: UpGeometry,
    pub weight: Param<T>,
    inputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> ConvTranspose3d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: UpGeometry) -> Self {
        let k = geometry.kernel;
        ConvTranspose3d {
            in_channels,
            out_channels,
            geometry,
            weight: Param::zeros(&[in_channels, out_channels, k, k, k]),
            inputs: Vec::new(),
        }
    }

    /// He-normal with the fan-in of one output voxel.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let overlap = self.geometry.kernel.div_ceil(self.geometry.stride).pow(3);
        self.weight.init_he(self.in_channels * overlap, rng);
    }

    pub fn forward(&mut self, xs: Vec<Tensor4<T>>, mode: Mode) -> Result<Vec<Tensor4<T>>> {
        let ys = xs
            .iter()
            .map(|x| {
                if x.channels() != self.in_channels {
                    return Err(Error::ShapeMismatch {
                        context: "ConvTranspose3d",
                        detail: format!("expected {} input channels, got {}", self.in_channels, x.channels()),
                    });
                }
                conv_transpose3d_forward(x, &self.weight.value, self.out_channels, self.geometry)
            })
            .collect::<Result<Vec<_>>>()?;
        if mode == Mode::Train {
            self.inputs = xs;
        }
        Ok(ys)
    }

    pub fn backward(&mut self, gys: Vec<Tensor4<T>>) -> Vec<Tensor4<T>> {
        let inputs = std::mem::take(&mut self.inputs);
        assert_eq!(inputs.len(), gys.len(), "ConvTranspose3d::backward without a matching training forward");
        inputs
            .iter()
            .zip(&gys)
            .map(|(x, gy)| {
                let (gx, gw) = conv_transpose3d_backward(x, &self.weight.value, self.geometry, gy);
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
