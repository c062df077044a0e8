use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{FrameStack, ValueRange};

/// Downsamples every plane to `target_h × target_w`.
///
/// Binary and signed stacks use max-magnitude pooling so isolated events
/// survive; greyscale and unit stacks use mean pooling when the sizes
/// divide evenly and bilinear sampling otherwise.
pub fn resize_stack<T: Scalar>(stack: &FrameStack<T>, target_h: usize, target_w: usize) -> Result<FrameStack<T>> {
    let (h, w) = (stack.height(), stack.width());
    if target_h == 0 || target_w == 0 || target_h > h || target_w > w {
        return Err(Error::invalid(
            "target size",
            format!("cannot resize {h}x{w} to {target_h}x{target_w}; only downscaling is supported"),
        ));
    }
    if (target_h, target_w) == (h, w) {
        return Ok(stack.clone());
    }
    let divisible = h % target_h == 0 && w % target_w == 0;
    let mut data = Vec::with_capacity(stack.planes() * target_h * target_w);
    for p in 0..stack.planes() {
        let plane = stack.plane(p);
        match stack.value_range() {
            ValueRange::Binary01 | ValueRange::Signed1 => max_magnitude_pool(plane, h, w, target_h, target_w, &mut data),
            _ if divisible => mean_pool(plane, h, w, target_h, target_w, &mut data),
            _ => bilinear(plane, h, w, target_h, target_w, &mut data),
        }
    }
    Ok(FrameStack::from_parts_unchecked(
        stack.mode(),
        stack.value_range(),
        stack.planes(),
        target_h,
        target_w,
        data,
    ))
}

// Source rows/cols covered by output cell `i` of `n` over `len` inputs.
fn footprint(i: usize, n: usize, len: usize) -> std::ops::Range<usize> {
    (i * len / n)..((i + 1) * len).div_ceil(n)
}

fn max_magnitude_pool<T: Scalar>(plane: &[T], h: usize, w: usize, th: usize, tw: usize, out: &mut Vec<T>) {
    for oy in 0..th {
        for ox in 0..tw {
            let mut best = T::zero();
            for y in footprint(oy, th, h) {
                for x in footprint(ox, tw, w) {
                    let v = plane[y * w + x];
                    if v.abs() > best.abs() {
                        best = v;
                    }
                }
            }
            out.push(best);
        }
    }
}

fn mean_pool<T: Scalar>(plane: &[T], h: usize, w: usize, th: usize, tw: usize, out: &mut Vec<T>) {
    let (fy, fx) = (h / th, w / tw);
    let count = T::of_usize(fy * fx);
    for oy in 0..th {
        for ox in 0..tw {
            let mut sum = T::zero();
            for y in oy * fy..(oy + 1) * fy {
                for x in ox * fx..(ox + 1) * fx {
                    sum += plane[y * w + x];
                }
            }
            out.push(sum / count);
        }
    }
}

fn bilinear<T: Scalar>(plane: &[T], h: usize, w: usize, th: usize, tw: usize, out: &mut Vec<T>) {
    let coord = |o: usize, n: usize, len: usize| -> (usize, usize, T) {
        let src = ((o as f64 + 0.5) * len as f64 / n as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, T::of(src - lo as f64))
    };
    for oy in 0..th {
        let (y0, y1, ty) = coord(oy, th, h);
        for ox in 0..tw {
            let (x0, x1, tx) = coord(ox, tw, w);
            let top = plane[y0 * w + x0] * (T::one() - tx) + plane[y0 * w + x1] * tx;
            let bottom = plane[y1 * w + x0] * (T::one() - tx) + plane[y1 * w + x1] * tx;
            out.push(top * (T::one() - ty) + bottom * ty);
        }
    }
}
