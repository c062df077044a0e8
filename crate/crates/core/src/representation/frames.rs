use crate::error::Result;
use crate::event::{partition, EventStream, Polarity};
use crate::scalar::Scalar;

use super::{FrameMode, FrameStack};

/// Builds one frame per time window (two for Sep, interleaved
/// `F⁺₀, F⁻₀, F⁺₁, …`). Pixels without events are 0.
pub fn make_frames<T: Scalar>(stream: &EventStream, window_length: f64, mode: FrameMode) -> Result<FrameStack<T>> {
    let groups = partition(stream, window_length)?;
    let (h, w) = (usize::from(stream.height()), usize::from(stream.width()));
    let per_window = mode.planes_per_window();
    let mut stack = FrameStack::zeros(mode, mode.native_range(), groups.len() * per_window, h, w);

    // 0 = no event, otherwise the sign of the last event.
    let mut last = vec![0i8; h * w];
    let mut seen_pos = vec![false; h * w];
    let mut seen_neg = vec![false; h * w];
    for (k, group) in groups.iter().enumerate() {
        last.iter_mut().for_each(|v| *v = 0);
        seen_pos.iter_mut().for_each(|v| *v = false);
        seen_neg.iter_mut().for_each(|v| *v = false);
        // Events are time-sorted, so overwriting keeps the greatest
        // timestamp and, on ties, the later input position.
        for e in group.iter() {
            let i = usize::from(e.y) * w + usize::from(e.x);
            last[i] = e.polarity.sign();
            match e.polarity {
                Polarity::Positive => seen_pos[i] = true,
                Polarity::Negative => seen_neg[i] = true,
            }
        }
        let one = T::one();
        match mode {
            FrameMode::Sep => {
                let plane = stack.plane_mut(2 * k);
                for (v, s) in plane.iter_mut().zip(&seen_pos) {
                    if *s {
                        *v = one;
                    }
                }
                let plane = stack.plane_mut(2 * k + 1);
                for (v, s) in plane.iter_mut().zip(&seen_neg) {
                    if *s {
                        *v = one;
                    }
                }
            }
            _ => {
                let plane = stack.plane_mut(k);
                for (v, l) in plane.iter_mut().zip(&last) {
                    *v = match (mode, *l) {
                        (_, 0) => T::zero(),
                        (FrameMode::Pos, 1) | (FrameMode::Neg, -1) | (FrameMode::Any, _) => one,
                        (FrameMode::Last, s) => T::of(f64::from(s)),
                        _ => T::zero(),
                    };
                }
            }
        }
    }
    Ok(stack)
}
