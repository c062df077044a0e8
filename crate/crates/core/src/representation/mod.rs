//! Event Frame representations of an event stream and the preprocessing
//! chain that turns them into network input.
//!
//! The chain is `make_frames → augment → sobel_frames → resize_stack →
//! normalize_unit`; every stage is a pure per-plane map.

mod augment;
mod frames;
mod resize;
mod sobel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::scalar::Scalar;
use crate::voxel::VoxelGrid;

pub use augment::{apply_augmentation, augment, AugmentOp};
pub use frames::make_frames;
pub use resize::resize_stack;
pub use sobel::{sobel_frames, sobel_magnitude, SobelKernelPair, SobelNormalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameMode {
    /// 1 where the last event in the window is positive.
    Pos,
    /// 1 where the last event in the window is negative.
    Neg,
    /// Polarity of the last event, `±1`.
    Last,
    /// 1 where any event occurred.
    Any,
    /// Separate positive and negative "any event" planes, interleaved.
    Sep,
}

impl FrameMode {
    pub const ALL: [FrameMode; 5] = [FrameMode::Pos, FrameMode::Neg, FrameMode::Last, FrameMode::Any, FrameMode::Sep];

    pub fn name(self) -> &'static str {
        match self {
            FrameMode::Pos => "pos",
            FrameMode::Neg => "neg",
            FrameMode::Last => "last",
            FrameMode::Any => "any",
            FrameMode::Sep => "sep",
        }
    }

    /// Planes produced per time window.
    pub fn planes_per_window(self) -> usize {
        if self == FrameMode::Sep {
            2
        } else {
            1
        }
    }

    pub fn native_range(self) -> ValueRange {
        if self == FrameMode::Last {
            ValueRange::Signed1
        } else {
            ValueRange::Binary01
        }
    }
}

impl fmt::Display for FrameMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FrameMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName {
                what: "frame mode",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    Binary01,
    Signed1,
    UnitInterval,
    Greyscale255,
}

impl ValueRange {
    fn admits<T: Scalar>(self, v: T) -> bool {
        match self {
            ValueRange::Binary01 => v == T::zero() || v == T::one(),
            ValueRange::Signed1 => v == T::zero() || v == T::one() || v == -T::one(),
            ValueRange::UnitInterval => v >= T::zero() && v <= T::one(),
            ValueRange::Greyscale255 => v >= T::zero() && v <= T::of(255.0),
        }
    }
}

/// `planes` frames of `height × width` values, plane-major, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack<T> {
    mode: FrameMode,
    value_range: ValueRange,
    planes: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> FrameStack<T> {
    pub fn new(
        mode: FrameMode,
        value_range: ValueRange,
        planes: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != planes * height * width {
            return Err(Error::ShapeMismatch {
                context: "FrameStack::new",
                detail: format!("{} values for {planes}x{height}x{width}", data.len()),
            });
        }
        if planes % mode.planes_per_window() != 0 {
            return Err(Error::ShapeMismatch {
                context: "FrameStack::new",
                detail: format!("{planes} planes is not a whole number of {mode} windows"),
            });
        }
        if let Some(i) = data.iter().position(|v| !value_range.admits(*v)) {
            return Err(Error::invalid(
                "frame values",
                format!("value {} at index {i} violates {value_range:?}", data[i]),
            ));
        }
        Ok(FrameStack {
            mode,
            value_range,
            planes,
            height,
            width,
            data,
        })
    }

    pub fn zeros(mode: FrameMode, value_range: ValueRange, planes: usize, height: usize, width: usize) -> Self {
        FrameStack {
            mode,
            value_range,
            planes,
            height,
            width,
            data: vec![T::zero(); planes * height * width],
        }
    }

    pub(crate) fn from_parts_unchecked(
        mode: FrameMode,
        value_range: ValueRange,
        planes: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), planes * height * width);
        debug_assert!(data.iter().all(|v| value_range.admits(*v)));
        FrameStack {
            mode,
            value_range,
            planes,
            height,
            width,
            data,
        }
    }

    pub fn mode(&self) -> FrameMode {
        self.mode
    }

    pub fn value_range(&self) -> ValueRange {
        self.value_range
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    /// Number of time windows (planes / 2 for Sep).
    pub fn window_count(&self) -> usize {
        self.planes / self.mode.planes_per_window()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, index: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[index * n..(index + 1) * n]
    }

    pub fn plane_mut(&mut self, index: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[index * n..(index + 1) * n]
    }

    pub fn at(&self, plane: usize, y: usize, x: usize) -> T {
        self.data[(plane * self.height + y) * self.width + x]
    }

    pub fn cast<U: Scalar>(&self) -> FrameStack<U> {
        FrameStack {
            mode: self.mode,
            value_range: self.value_range,
            planes: self.planes,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Maps any stack onto `[0, 1]`: greyscale is divided by 255, signed values
/// go through `(v + 1) / 2`, binary and unit stacks are unchanged.
pub fn normalize_unit<T: Scalar>(stack: &FrameStack<T>) -> FrameStack<T> {
    let two = T::of(2.0);
    let scale = T::of(255.0);
    let data = match stack.value_range {
        ValueRange::Binary01 | ValueRange::UnitInterval => stack.data.clone(),
        ValueRange::Signed1 => stack.data.iter().map(|v| (*v + T::one()) / two).collect(),
        ValueRange::Greyscale255 => stack.data.iter().map(|v| *v / scale).collect(),
    };
    stack.with_data(ValueRange::UnitInterval, data)
}

impl<T: Scalar> FrameStack<T> {
    pub(crate) fn with_data(&self, value_range: ValueRange, data: Vec<T>) -> FrameStack<T> {
        FrameStack::from_parts_unchecked(self.mode, value_range, self.planes, self.height, self.width, data)
    }
}

/// Representation settings for the network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationConfig {
    pub mode: FrameMode,
    /// Time window in seconds.
    pub window_length: f64,
    pub sobel: bool,
    pub sobel_normalization: SobelNormalization,
    /// Square side of the network input planes.
    pub target_size: usize,
    /// Augmentations randomly applied during training.
    pub augment: Vec<AugmentOp>,
}

impl RepresentationConfig {
    /// Frames before any augmentation: the cacheable part of the chain.
    pub fn base_frames<T: Scalar>(&self, stream: &EventStream) -> Result<FrameStack<T>> {
        make_frames(stream, self.window_length, self.mode)
    }

    /// Sobel (optional), resize and normalisation of base or augmented
    /// frames.
    pub fn finish<T: Scalar>(&self, frames: &FrameStack<T>) -> Result<FrameStack<T>> {
        let edged;
        let frames = if self.sobel {
            edged = sobel_frames(frames, self.sobel_normalization)?;
            &edged
        } else {
            frames
        };
        let resized = resize_stack(frames, self.target_size, self.target_size)?;
        Ok(normalize_unit(&resized))
    }

    /// Full chain without augmentation.
    pub fn represent<T: Scalar>(&self, stream: &EventStream) -> Result<FrameStack<T>> {
        self.finish(&self.base_frames(stream)?)
    }

    /// Full chain with the configured augmentations drawn from `seed`.
    pub fn represent_augmented<T: Scalar>(
        &self,
        base: &FrameStack<T>,
        label: &VoxelGrid,
        seed: u64,
    ) -> Result<(FrameStack<T>, VoxelGrid)> {
        let (frames, label) = augment(base, label, &self.augment, seed);
        Ok((self.finish(&frames)?, label))
    }
}
