//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each check draws a random shape, contracts the layer output with a fixed
//! random cotangent `r` so that `L = Σ r·y`, and compares the analytic
//! gradient of `L` with `(L(θ+ε) − L(θ−ε)) / 2ε` coordinate by coordinate.
//! The reported error is the norm-wise relative error
//! `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`.

use evoxel::neural::{
    conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward, eca_backward, eca_forward,
    focal_loss, BatchNorm3d, ConvGeometry, FocalLossConfig, Mode, Network, NetworkConfig, Param, Tensor4, UpGeometry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub what: String,
    pub rel_err: f64,
    pub coordinates: usize,
    /// Coordinates left out because a ReLU kink lies within ε of them.
    pub kinked: usize,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `theta` along the coordinates in `which`.
pub fn numeric_gradient(theta: &[f64], which: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    which
        .iter()
        .map(|&i| {
            let v = t[i];
            t[i] = v + EPSILON;
            let plus = f(&t);
            t[i] = v - EPSILON;
            let minus = f(&t);
            t[i] = v;
            (plus - minus) / (2.0 * EPSILON)
        })
        .collect()
}

/// Like [`numeric_gradient`], but a coordinate whose central difference
/// changes between steps ε and ε/2 is reported as `None`: the step crossed
/// a kink and the difference says nothing about the derivative.
pub fn numeric_gradient_smooth(theta: &[f64], which: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<Option<f64>> {
    let mut t = theta.to_vec();
    let mut central = |t: &mut Vec<f64>, i: usize, h: f64| {
        let v = t[i];
        t[i] = v + h;
        let plus = f(t);
        t[i] = v - h;
        let minus = f(t);
        t[i] = v;
        (plus - minus) / (2.0 * h)
    };
    which
        .iter()
        .map(|&i| {
            let full = central(&mut t, i, EPSILON);
            let half = central(&mut t, i, EPSILON / 2.0);
            ((full - half).abs() <= 1e-5 * full.abs().max(half.abs()) + 1e-9).then_some(full)
        })
        .collect()
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_vec(shape, normal(rng, shape.iter().product())).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn conv3d(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ci = rng.random_range(1..=3);
    let co = rng.random_range(1..=3);
    let kernel = [0; 3].map(|_| rng.random_range(1..=3usize));
    let stride = [0; 3].map(|_| rng.random_range(1..=2usize));
    let padding = kernel.map(|k| rng.random_range(0..=k / 2));
    let dims = kernel.map(|k| k + rng.random_range(0..=3usize));
    let g = ConvGeometry { kernel, stride, padding };
    let x = tensor(&mut rng, [ci, dims[0], dims[1], dims[2]]);
    let w = normal(&mut rng, co * ci * g.kernel_volume());
    let y = conv3d_forward(&x, &w, co, &g).unwrap();
    let r = tensor(&mut rng, y.shape());
    let (gx, gw) = conv3d_backward(&x, &w, &g, &r);

    let nx = x.len();
    let theta: Vec<f64> = x.data().iter().chain(&w).copied().collect();
    let numeric = numeric_gradient(&theta, &all(theta.len()), |t| {
        let x = Tensor4::from_vec(x.shape(), t[..nx].to_vec()).unwrap();
        dot(conv3d_forward(&x, &t[nx..], co, &g).unwrap().data(), r.data())
    });
    let analytic: Vec<f64> = gx.data().iter().chain(&gw).copied().collect();
    GradCheck {
        what: format!("conv3d {ci}->{co} k{kernel:?} s{stride:?} p{padding:?} on {dims:?}"),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: theta.len(),
        kinked: 0,
    }
}

pub fn conv_transpose3d(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ci = rng.random_range(1..=3);
    let co = rng.random_range(1..=3);
    let kernel: usize = rng.random_range(1..=4);
    let stride: usize = rng.random_range(1..=2);
    let padding: usize = rng.random_range(0..=(kernel - 1) / 2);
    let g = UpGeometry { kernel, stride, padding };
    let dims = [0; 3].map(|_| rng.random_range(2..=3usize));
    let x = tensor(&mut rng, [ci, dims[0], dims[1], dims[2]]);
    let w = normal(&mut rng, ci * co * kernel.pow(3));
    let y = conv_transpose3d_forward(&x, &w, co, g).unwrap();
    let r = tensor(&mut rng, y.shape());
    let (gx, gw) = conv_transpose3d_backward(&x, &w, g, &r);

    let nx = x.len();
    let theta: Vec<f64> = x.data().iter().chain(&w).copied().collect();
    let numeric = numeric_gradient(&theta, &all(theta.len()), |t| {
        let x = Tensor4::from_vec(x.shape(), t[..nx].to_vec()).unwrap();
        dot(conv_transpose3d_forward(&x, &t[nx..], co, g).unwrap().data(), r.data())
    });
    let analytic: Vec<f64> = gx.data().iter().chain(&gw).copied().collect();
    GradCheck {
        what: format!("transposed conv {ci}->{co} k{kernel} s{stride} p{padding} on {dims:?}"),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: theta.len(),
        kinked: 0,
    }
}

/// Training-mode batch norm over a batch of 1–3 samples, checked with
/// respect to the inputs, γ and β.
pub fn batch_norm(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..=3);
    let batch = rng.random_range(1..=3);
    let dims = [0; 3].map(|_| rng.random_range(1..=3usize));
    let shape = [c, dims[0], dims[1], dims[2]];
    let xs: Vec<Tensor4<f64>> = (0..batch).map(|_| tensor(&mut rng, shape)).collect();
    // A single spatial position in a batch of one has zero variance; keep
    // at least two values per channel.
    let xs = if batch * dims.iter().product::<usize>() == 1 {
        vec![xs[0].clone(), tensor(&mut rng, shape)]
    } else {
        xs
    };
    let gamma = normal(&mut rng, c);
    let beta = normal(&mut rng, c);
    let rs: Vec<Tensor4<f64>> = xs.iter().map(|_| tensor(&mut rng, shape)).collect();

    let build = |gamma: &[f64], beta: &[f64]| {
        let mut bn = BatchNorm3d::<f64>::new(c);
        bn.gamma.value = gamma.to_vec();
        bn.beta.value = beta.to_vec();
        bn
    };
    let mut bn = build(&gamma, &beta);
    bn.forward(xs.clone(), Mode::Train).unwrap();
    let gx = bn.backward(rs.clone());

    let n = xs[0].len();
    let theta: Vec<f64> = xs.iter().flat_map(|x| x.data().to_vec()).chain(gamma.clone()).chain(beta.clone()).collect();
    let nx = n * xs.len();
    let numeric = numeric_gradient(&theta, &all(theta.len()), |t| {
        let inputs = (0..xs.len())
            .map(|i| Tensor4::from_vec(shape, t[i * n..(i + 1) * n].to_vec()).unwrap())
            .collect();
        let mut bn = build(&t[nx..nx + c], &t[nx + c..]);
        let ys = bn.forward(inputs, Mode::Train).unwrap();
        ys.iter().zip(&rs).map(|(y, r)| dot(y.data(), r.data())).sum()
    });
    let analytic: Vec<f64> = gx
        .iter()
        .flat_map(|g| g.data().to_vec())
        .chain(bn.gamma.grad.clone())
        .chain(bn.beta.grad.clone())
        .collect();
    GradCheck {
        what: format!("batch norm {c} channels, batch {}, spatial {dims:?}", xs.len()),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: theta.len(),
        kinked: 0,
    }
}

pub fn eca(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(2..=9);
    let k = [1, 3, 5][rng.random_range(0..3)];
    let dims = [0; 3].map(|_| rng.random_range(1..=3usize));
    let x = tensor(&mut rng, [c, dims[0], dims[1], dims[2]]);
    let w = normal(&mut rng, k);
    let r = tensor(&mut rng, x.shape());
    let (gx, gw) = eca_backward(&x, &w, &r);

    let nx = x.len();
    let theta: Vec<f64> = x.data().iter().chain(&w).copied().collect();
    let numeric = numeric_gradient(&theta, &all(theta.len()), |t| {
        let x = Tensor4::from_vec(x.shape(), t[..nx].to_vec()).unwrap();
        dot(eca_forward(&x, &t[nx..]).0.data(), r.data())
    });
    let analytic: Vec<f64> = gx.data().iter().chain(&gw).copied().collect();
    GradCheck {
        what: format!("ECA {c} channels, kernel {k}, spatial {dims:?}"),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: theta.len(),
        kinked: 0,
    }
}

pub fn focal(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=64);
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
    let target: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    let config = FocalLossConfig {
        alpha: rng.random_range(0.1..0.9),
        gamma: [0.0, 1.0, 2.0, 2.5][rng.random_range(0..4)],
    };
    let (_, analytic) = focal_loss(&logits, &target, config).unwrap();
    let numeric = numeric_gradient(&logits, &all(n), |t| focal_loss(t, &target, config).unwrap().0);
    GradCheck {
        what: format!("focal loss n={n} alpha={:.3} gamma={}", config.alpha, config.gamma),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: n,
        kinked: 0,
    }
}

/// A small complete encoder/decoder, seed-dependent in its widths, trained
/// on a batch of two random inputs through the focal loss. Checked on a
/// random subset of parameters and input values.
pub fn end_to_end(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NetworkConfig {
        stem_channels: rng.random_range(2..=4),
        stage_widths: vec![rng.random_range(2..=4) * 2],
        stage_blocks: vec![rng.random_range(1..=2)],
        bottleneck_ratio: 2,
        seed_channels: rng.random_range(2..=3),
        decoder_channels: [3, 2, 2],
        resolution: 8,
        dropout: 0.0,
    };
    let in_channels = rng.random_range(1..=2);
    let planes = rng.random_range(2..=4);
    let side = [4, 6, 8][rng.random_range(0..3)];
    let shape = [in_channels, planes, side, side];
    let xs: Vec<Tensor4<f64>> = (0..2).map(|_| tensor(&mut rng, shape)).collect();
    let targets: Vec<Vec<bool>> = (0..2).map(|_| (0..512).map(|_| rng.random_bool(0.3)).collect()).collect();
    let focal_config = FocalLossConfig::default();

    let mut net = Network::<f64>::new(&config, in_channels, seed).unwrap();
    // Non-trivial batch-norm affine and ECA weights so that their gradients
    // are exercised too.
    net.visit(&mut |name: &str, p: &mut Param<f64>| {
        if name.ends_with("gamma") || name.ends_with("beta") || name.ends_with("eca.weight") || name.ends_with("bias") {
            for v in p.value.iter_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
    });

    // Loss and, when `grads`, the gradient with respect to the inputs.
    let loss = |net: &mut Network<f64>, xs: Vec<Tensor4<f64>>, grads: bool| -> (f64, Vec<f64>) {
        let ys = net.forward(xs, Mode::Train).unwrap();
        let mut total = 0.0;
        let mut gys = Vec::new();
        for (y, t) in ys.iter().zip(&targets) {
            let (l, g) = focal_loss(y.data(), t, focal_config).unwrap();
            total += l;
            gys.push(Tensor4::from_vec(y.shape(), g).unwrap());
        }
        if !grads {
            return (total, Vec::new());
        }
        net.zero_grad();
        let gx = net.backward(gys);
        (total, gx.iter().flat_map(|g| g.data().to_vec()).collect())
    };

    let (_, input_grads) = loss(&mut net, xs.clone(), true);
    let mut params = Vec::new();
    let mut param_grads = Vec::new();
    net.visit(&mut |_: &str, p: &mut Param<f64>| {
        params.extend_from_slice(&p.value);
        param_grads.extend_from_slice(&p.grad);
    });

    let nx = xs[0].len();
    let theta: Vec<f64> = xs.iter().flat_map(|x| x.data().to_vec()).chain(params).collect();
    let analytic_all: Vec<f64> = input_grads.into_iter().chain(param_grads).collect();
    let which: Vec<usize> = (0..48).map(|_| rng.random_range(0..theta.len())).collect();
    let base = net.clone();
    let numeric = numeric_gradient_smooth(&theta, &which, |t| {
        let mut net = base.clone();
        let mut offset = 2 * nx;
        net.visit(&mut |_: &str, p: &mut Param<f64>| {
            let n = p.value.len();
            p.value.copy_from_slice(&t[offset..offset + n]);
            offset += n;
        });
        let inputs = (0..2).map(|i| Tensor4::from_vec(shape, t[i * nx..(i + 1) * nx].to_vec()).unwrap()).collect();
        loss(&mut net, inputs, false).0
    });
    let (analytic, numeric): (Vec<f64>, Vec<f64>) =
        which.iter().zip(&numeric).filter_map(|(&i, n)| n.map(|n| (analytic_all[i], n))).unzip();
    GradCheck {
        what: format!(
            "network stem {} stage {:?}x{:?}, input {shape:?}, {} sampled coordinates",
            config.stem_channels,
            config.stage_widths,
            config.stage_blocks,
            which.len()
        ),
        rel_err: relative_error(&analytic, &numeric),
        coordinates: analytic.len(),
        kinked: which.len() - analytic.len(),
    }
}
