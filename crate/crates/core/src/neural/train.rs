//! Minibatch training loop: representation, augmentation, focal loss and
//! Adam, with a per-epoch validation probe.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{binarize, iou, mean_over_categories};
use crate::representation::{FrameStack, RepresentationConfig};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::voxel::{Category, VoxelGrid};

use super::adam::{Adam, AdamConfig};
use super::loss::{focal_loss, FocalLossConfig};
use super::network::{Network, NetworkConfig};
use super::param::Mode;
use super::tensor::Tensor4;

const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;
const INIT_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub focal: FocalLossConfig,
    /// Fixed binarization threshold of the per-epoch validation mIoU.
    pub probe_threshold: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

/// Per-epoch learning-rate multiplier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the full rate at epoch 0 down to
    /// [`COSINE_FLOOR`] of it at the configured final epoch, held there
    /// afterwards.
    Cosine,
}

pub const COSINE_FLOOR: f64 = 0.01;

impl LrSchedule {
    /// Multiplier for the 0-based `epoch` of a run of `epochs`.
    pub fn factor(self, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                let progress = if epochs == 0 { 1.0 } else { (epoch as f64 / epochs as f64).min(1.0) };
                COSINE_FLOOR + (1.0 - COSINE_FLOOR) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

impl TrainingConfig {
    pub fn desk() -> Self {
        TrainingConfig {
            epochs: 300,
            batch_size: 5,
            optimizer: AdamConfig::desk(),
            focal: FocalLossConfig::default(),
            probe_threshold: 0.3,
            lr_schedule: LrSchedule::Constant,
        }
    }

    pub fn paper() -> Self {
        TrainingConfig {
            epochs: 100,
            optimizer: AdamConfig::paper(),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("training: batch_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.epsilon > 0.0) {
            return Err(Error::Config(format!("training: invalid optimizer settings {o:?}")));
        }
        if !(0.0..1.0).contains(&self.probe_threshold) {
            return Err(Error::Config(format!("training: probe threshold {} outside [0, 1)", self.probe_threshold)));
        }
        Ok(())
    }
}

/// One labelled example: cached base frames, the unaugmented network
/// input derived from them, and the voxel label.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub category: Category,
    pub object_id: String,
    pub frames: FrameStack<T>,
    pub input: Tensor4<T>,
    pub label: VoxelGrid,
}

impl<T: Scalar> Sample<T> {
    pub fn new(
        category: Category,
        object_id: String,
        frames: FrameStack<T>,
        label: VoxelGrid,
        repr: &RepresentationConfig,
    ) -> Result<Self> {
        let input = Tensor4::from_frames(&repr.finish(&frames)?);
        Ok(Sample {
            category,
            object_id,
            frames,
            input,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_miou: Option<f64>,
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub network: Network<T>,
    pub adam: Adam<T>,
    pub representation: RepresentationConfig,
    pub training: TrainingConfig,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        network: &NetworkConfig,
        representation: &RepresentationConfig,
        training: &TrainingConfig,
        seed: u64,
    ) -> Result<Self> {
        training.validate()?;
        let in_channels = representation.mode.planes_per_window();
        Ok(Trainer {
            network: Network::new(network, in_channels, derive_seed(seed, &[INIT_STREAM]))?,
            adam: Adam::new(training.optimizer),
            representation: representation.clone(),
            training: training.clone(),
            seed,
            epoch: 0,
            history: Vec::new(),
        })
    }

    fn batch_inputs(&self, train: &[Sample<T>], indices: &[usize]) -> Result<Vec<(Tensor4<T>, VoxelGrid)>> {
        let epoch = self.epoch as u64;
        indices
            .par_iter()
            .map(|&i| {
                let s = &train[i];
                if self.representation.augment.is_empty() {
                    return Ok((s.input.clone(), s.label.clone()));
                }
                let seed = derive_seed(self.seed, &[AUGMENT_STREAM, epoch, i as u64]);
                let (frames, label) = self.representation.represent_augmented(&s.frames, &s.label, seed)?;
                Ok((Tensor4::from_frames(&frames), label))
            })
            .collect()
    }

    /// Runs one epoch over `train`, then probes `val` (if non-empty).
    pub fn run_epoch(&mut self, train: &[Sample<T>], val: &[Sample<T>]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::EmptySplit { split: "train".into() });
        }
        let epoch = self.epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[SHUFFLE_STREAM, epoch])));

        self.adam.config.learning_rate = self.training.optimizer.learning_rate
            * self.training.lr_schedule.factor(self.epoch, self.training.epochs);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(self.training.batch_size).enumerate() {
            let (xs, labels): (Vec<_>, Vec<_>) = self.batch_inputs(train, chunk)?.into_iter().unzip();
            self.network.set_dropout_seed(derive_seed(self.seed, &[DROPOUT_STREAM, epoch, b as u64]));
            self.network.zero_grad();
            let logits = self.network.forward(xs, Mode::Train)?;
            let scale = T::of(1.0 / chunk.len() as f64);
            let mut batch_loss = 0.0;
            let mut grads = Vec::with_capacity(logits.len());
            for (y, label) in logits.iter().zip(&labels) {
                let (loss, g) = focal_loss(y.data(), label.cells(), self.training.focal)?;
                batch_loss += loss;
                grads.push(Tensor4::from_vec(y.shape(), g.into_iter().map(|v| v * scale).collect())?);
            }
            if !batch_loss.is_finite() {
                let worst = logits
                    .iter()
                    .flat_map(|y| y.data().iter().map(|v| v.as_f64().abs()))
                    .fold(0.0, f64::max);
                let ids: Vec<&str> = chunk.iter().map(|i| train[*i].object_id.as_str()).collect();
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch + 1,
                    batch: b,
                    diagnostics: format!("samples {ids:?}, max |logit| {worst}"),
                });
            }
            loss_sum += batch_loss;
            self.network.backward(grads);
            let network = &mut self.network;
            self.adam.update(|v| network.visit(v));
        }

        self.epoch += 1;
        let val_miou = if val.is_empty() {
            None
        } else {
            Some(self.probe(val)?)
        };
        let record = EpochRecord {
            epoch: self.epoch,
            train_loss: loss_sum / train.len() as f64,
            val_miou,
        };
        debug!("epoch {}: loss {:.6e}, val mIoU {:?}", record.epoch, record.train_loss, record.val_miou);
        self.history.push(record.clone());
        Ok(record)
    }

    /// Validation mIoU at the fixed probe threshold.
    pub fn probe(&self, samples: &[Sample<T>]) -> Result<f64> {
        let p = self.training.probe_threshold;
        let scores = samples
            .par_iter()
            .map_init(
                || self.network.clone(),
                |net, s| {
                    let logits = net.predict(s.input.clone())?;
                    Ok((s.category, iou(&binarize(&logits, p), &s.label)?))
                },
            )
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_over_categories(scores))
    }

    /// Trains until `self.epoch == epochs`, logging progress every
    /// `log_every` epochs.
    pub fn train_to(&mut self, epochs: usize, train: &[Sample<T>], val: &[Sample<T>], log_every: usize) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptySplit { split: "train".into() });
        }
        while self.epoch < epochs {
            let r = self.run_epoch(train, val)?;
            if log_every > 0 && (r.epoch % log_every == 0 || r.epoch == epochs) {
                match r.val_miou {
                    Some(m) => info!("epoch {}/{epochs}: train loss {:.4e}, val mIoU {m:.4}", r.epoch, r.train_loss),
                    None => info!("epoch {}/{epochs}: train loss {:.4e}", r.epoch, r.train_loss),
                }
            }
        }
        Ok(())
    }
}
