//! Dense voxel reconstruction from monocular event-camera streams.
//!
//! - [`event`]: events, streams and time-window partitioning
//! - [`io`]: `.evt`/`.evb` event files, voxel labels, containers, dataset layout
//! - [`synth`]: deterministic orbit-scan simulator producing training pairs
//! - [`representation`]: Event Frame modes, Sobel Event Frame, resize, augmentation
//! - [`neural`]: ECA-enhanced bottleneck encoder, voxel decoder, focal loss, Adam
//! - [`evaluation`]: binarization, IoU / F-Score, threshold sweep
//! - [`config`]: run configuration with `desk` and `paper` presets
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod event;
pub mod export;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod representation;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
pub use event::{Event, EventStream, Polarity, TimeWindowPartition};
pub use representation::{FrameMode, FrameStack, ValueRange};
pub use scalar::Scalar;
pub use voxel::{Category, LogitGrid, VoxelGrid};

pub type FrameStack32 = representation::FrameStack<f32>;
pub type FrameStack64 = representation::FrameStack<f64>;
pub type LogitGrid32 = voxel::LogitGrid<f32>;
pub type LogitGrid64 = voxel::LogitGrid<f64>;
pub type Tensor32 = neural::Tensor4<f32>;
pub type Tensor64 = neural::Tensor4<f64>;
pub type Network32 = neural::Network<f32>;
pub type Network64 = neural::Network<f64>;
