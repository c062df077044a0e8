//! Framework-free 3D network engine with explicit forward and backward
//! passes per layer.

mod adam;
mod bottleneck;
mod checkpoint;
mod conv;
mod eca;
mod layers;
mod loss;
mod network;
mod norm;
mod param;
mod tensor;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use bottleneck::BottleneckBlock;
pub use checkpoint::{
    Checkpoint, CheckpointMeta, OptimizerState, TensorEntry, TensorRole, CHECKPOINT_FORMAT, CHECKPOINT_JSON,
    CHECKPOINT_PARAMS, CHECKPOINT_VERSION,
};
pub use conv::{
    conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward, Conv3d, ConvGeometry,
    ConvTranspose3d, UpGeometry,
};
pub use eca::{adaptive_kernel_size, eca_backward, eca_forward, EcaModule};
pub use layers::{Dropout, GlobalAvgPool, Linear, Relu};
pub use loss::{focal_loss, FocalLossConfig, LOG_CLAMP};
pub use network::{Network, NetworkConfig, STEM_STRIDE};
pub use norm::{BatchNorm3d, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
pub use param::{Mode, Param, Visitor};
pub use tensor::Tensor4;
pub use train::{EpochRecord, LrSchedule, Sample, Trainer, TrainingConfig, COSINE_FLOOR};
