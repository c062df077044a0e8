//! Independent reference implementations used as test oracles, plus random
//! input generators.

use evoxel::{Event, EventStream, Polarity, VoxelGrid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random time-sorted stream; timestamps are drawn on a coarse grid so
/// that same-pixel ties and window-boundary events occur often.
pub fn random_stream(rng: &mut ChaCha8Rng, width: u16, height: u16, duration: f64, max_events: usize) -> EventStream {
    let n = rng.random_range(0..=max_events);
    let ticks = 64u32;
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let t = duration * f64::from(rng.random_range(0..=ticks)) / f64::from(ticks);
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(rng.random_range(0..width), rng.random_range(0..height), t, p)
        })
        .collect();
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    EventStream::new(width, height, duration, events).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, d: usize) -> VoxelGrid {
    let density = rng.random_range(0.0..1.0);
    VoxelGrid::from_fn(d, |_, _, _| rng.random_bool(density))
}

/// Window index of a timestamp by plain half-open arithmetic, with the
/// final-window clamp for `t = duration`.
pub fn window_of(t: f64, window: f64, windows: usize) -> usize {
    ((t / window).floor() as usize).min(windows - 1)
}

/// Direct 2D correlation with both Sobel stencils under zero padding,
/// combined by Euclidean magnitude.
pub fn sobel_direct(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    const SX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const SY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let e = plane[yy as usize * w + xx as usize];
                    gx += e * SX[(dy + 1) as usize][(dx + 1) as usize];
                    gy += e * SY[(dy + 1) as usize][(dx + 1) as usize];
                }
            }
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// IoU and F1 by counting coordinate sets.
pub fn set_metrics(pred: &VoxelGrid, gt: &VoxelGrid) -> (f64, f64) {
    use std::collections::BTreeSet;
    let d = pred.resolution();
    let set = |g: &VoxelGrid| -> BTreeSet<(usize, usize, usize)> {
        let mut s = BTreeSet::new();
        for z in 0..d {
            for y in 0..d {
                for x in 0..d {
                    if g.get(x, y, z) {
                        s.insert((x, y, z));
                    }
                }
            }
        }
        s
    };
    let (p, g) = (set(pred), set(gt));
    let inter = p.intersection(&g).count() as f64;
    let union = p.union(&g).count() as f64;
    if union == 0.0 {
        return (1.0, 1.0);
    }
    let iou = inter / union;
    let fp = p.difference(&g).count() as f64;
    let fn_ = g.difference(&p).count() as f64;
    (iou, 2.0 * inter / (2.0 * inter + fp + fn_))
}
