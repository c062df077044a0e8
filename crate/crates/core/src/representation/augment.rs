//! Label-consistent training augmentations.
//!
//! Image axes follow the scanner's camera convention: at azimuth zero the
//! image columns run along voxel +y and the image rows along voxel −z, so a
//! horizontal flip mirrors the label in y and a vertical flip mirrors it in
//! z. A 180° in-plane rotation is the composition of both flips.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::voxel::{Axis, VoxelGrid};

use super::{FrameMode, FrameStack, ValueRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    FlipH,
    FlipV,
    PolarityInvert,
    TemporalReverse,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 4] = [
        AugmentOp::FlipH,
        AugmentOp::FlipV,
        AugmentOp::PolarityInvert,
        AugmentOp::TemporalReverse,
    ];
}

/// Applies each op in `ops` independently with probability ½, in the listed
/// order. Deterministic in `seed`.
pub fn augment<T: Scalar>(
    stack: &FrameStack<T>,
    label: &VoxelGrid,
    ops: &[AugmentOp],
    seed: u64,
) -> (FrameStack<T>, VoxelGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = stack.clone();
    let mut label = label.clone();
    for op in ops {
        if rng.random_bool(0.5) {
            (stack, label) = apply_augmentation(&stack, &label, *op);
        }
    }
    (stack, label)
}

/// Applies one op unconditionally. Ops that have no meaning for the stack's
/// mode leave it untouched and log a warning.
pub fn apply_augmentation<T: Scalar>(
    stack: &FrameStack<T>,
    label: &VoxelGrid,
    op: AugmentOp,
) -> (FrameStack<T>, VoxelGrid) {
    let (h, w) = (stack.height(), stack.width());
    match op {
        AugmentOp::FlipH => {
            let mut out = stack.clone();
            for p in 0..stack.planes() {
                for row in out.plane_mut(p).chunks_mut(w) {
                    row.reverse();
                }
            }
            (out, label.mirrored(Axis::Y))
        }
        AugmentOp::FlipV => {
            let mut out = stack.clone();
            for p in 0..stack.planes() {
                let src = stack.plane(p);
                let dst = out.plane_mut(p);
                for y in 0..h {
                    dst[y * w..(y + 1) * w].copy_from_slice(&src[(h - 1 - y) * w..(h - y) * w]);
                }
            }
            (out, label.mirrored(Axis::Z))
        }
        AugmentOp::PolarityInvert => (invert_polarity(stack), label.clone()),
        AugmentOp::TemporalReverse => {
            let per = stack.mode().planes_per_window();
            let n = h * w * per;
            let mut data = Vec::with_capacity(stack.data().len());
            for window in stack.data().chunks(n.max(1)).rev() {
                data.extend_from_slice(window);
            }
            (stack.with_data(stack.value_range(), data), label.clone())
        }
    }
}

fn invert_polarity<T: Scalar>(stack: &FrameStack<T>) -> FrameStack<T> {
    match (stack.mode(), stack.value_range()) {
        (FrameMode::Last, ValueRange::Signed1) => {
            stack.with_data(ValueRange::Signed1, stack.data().iter().map(|v| -*v).collect())
        }
        // The Pos frame of the inverted stream is the Neg frame of the
        // original, so the data stays and the semantics swap.
        (FrameMode::Pos, range) => relabel(stack, FrameMode::Neg, range),
        (FrameMode::Neg, range) => relabel(stack, FrameMode::Pos, range),
        (FrameMode::Sep, range) => {
            let n = stack.height() * stack.width();
            let mut data = Vec::with_capacity(stack.data().len());
            for pair in stack.data().chunks((2 * n).max(1)) {
                let (pos, neg) = pair.split_at(n);
                data.extend_from_slice(neg);
                data.extend_from_slice(pos);
            }
            stack.with_data(range, data)
        }
        (mode, range) => {
            warn!("polarity inversion has no effect on {mode} frames in {range:?}");
            stack.clone()
        }
    }
}

fn relabel<T: Scalar>(stack: &FrameStack<T>, mode: FrameMode, range: ValueRange) -> FrameStack<T> {
    FrameStack::from_parts_unchecked(mode, range, stack.planes(), stack.height(), stack.width(), stack.data().to_vec())
}
