//! Versioned checkpoint container: `checkpoint.json` (configuration,
//! progress, optimizer metadata and a tensor manifest) next to `params.bin`
//! (little-endian f32 blobs at the manifest's byte offsets).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::RepresentationConfig;
use crate::scalar::Scalar;

use super::adam::{Adam, AdamConfig};
use super::network::{Network, NetworkConfig};
use super::param::{Param, Visitor};
use super::train::{EpochRecord, Trainer, TrainingConfig};

pub const CHECKPOINT_FORMAT: &str = "EVOXEL-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const CHECKPOINT_PARAMS: &str = "params.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub role: TensorRole,
    /// Byte offset into `params.bin`.
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub kind: String,
    pub step: u64,
    #[serde(flatten)]
    pub config: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    pub in_channels: usize,
    pub representation: RepresentationConfig,
    pub training: TrainingConfig,
    pub seed: u64,
    pub epoch: usize,
    pub optimizer: OptimizerState,
    pub history: Vec<EpochRecord>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub blob: Vec<f32>,
}

struct Gather<'a> {
    entries: &'a mut Vec<TensorEntry>,
    blob: &'a mut Vec<f32>,
    params_seen: &'a mut Vec<(String, Vec<usize>)>,
}

impl Gather<'_> {
    fn push<T: Scalar>(&mut self, name: String, role: TensorRole, shape: Vec<usize>, values: &[T]) {
        self.entries.push(TensorEntry {
            name,
            role,
            offset: self.blob.len() * 4,
            shape,
        });
        self.blob.extend(values.iter().map(|v| v.as_f64() as f32));
    }
}

impl<T: Scalar> Visitor<T> for Gather<'_> {
    fn param(&mut self, name: &str, p: &mut Param<T>) {
        self.params_seen.push((name.to_string(), p.shape.clone()));
        self.push(name.to_string(), TensorRole::Param, p.shape.clone(), &p.value);
    }

    fn buffer(&mut self, name: &str, values: &mut Vec<T>) {
        let shape = vec![values.len()];
        self.push(name.to_string(), TensorRole::Buffer, shape, values);
    }
}

struct Scatter<'a> {
    checkpoint: &'a Checkpoint,
    cursor: usize,
    error: Option<Error>,
}

impl Scatter<'_> {
    fn take<T: Scalar>(&mut self, name: &str, role: TensorRole, len: usize) -> Option<Vec<T>> {
        let entries = &self.checkpoint.meta.tensors;
        let entry = entries.get(self.cursor);
        self.cursor += 1;
        let found = entry.filter(|e| e.name == name && e.role == role);
        match found {
            Some(e) if e.shape.iter().product::<usize>() == len => {
                let start = e.offset / 4;
                self.checkpoint
                    .blob
                    .get(start..start + len)
                    .map(|s| s.iter().map(|v| T::of(f64::from(*v))).collect())
            }
            _ => {
                if self.error.is_none() {
                    self.error = Some(Error::Checkpoint(format!(
                        "tensor {} ({role:?}, {len} values) does not match the manifest entry {entry:?}",
                        name
                    )));
                }
                None
            }
        }
    }
}

impl<T: Scalar> Visitor<T> for Scatter<'_> {
    fn param(&mut self, name: &str, p: &mut Param<T>) {
        if let Some(v) = self.take(name, TensorRole::Param, p.len()) {
            p.value = v;
        }
    }

    fn buffer(&mut self, name: &str, values: &mut Vec<T>) {
        if let Some(v) = self.take(name, TensorRole::Buffer, values.len()) {
            *values = v;
        }
    }
}

impl Checkpoint {
    pub fn from_trainer<T: Scalar>(trainer: &mut Trainer<T>) -> Self {
        let mut entries = Vec::new();
        let mut blob = Vec::new();
        let mut params = Vec::new();
        trainer.network.visit(&mut Gather {
            entries: &mut entries,
            blob: &mut blob,
            params_seen: &mut params,
        });
        let mut g = Gather {
            entries: &mut entries,
            blob: &mut blob,
            params_seen: &mut Vec::new(),
        };
        for (role, state) in [(TensorRole::AdamM, &trainer.adam.m), (TensorRole::AdamV, &trainer.adam.v)] {
            for ((name, shape), values) in params.iter().zip(state) {
                g.push(name.clone(), role, shape.clone(), values);
            }
        }
        Checkpoint {
            meta: CheckpointMeta {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                network: trainer.network.config().clone(),
                in_channels: trainer.network.in_channels(),
                representation: trainer.representation.clone(),
                training: trainer.training.clone(),
                seed: trainer.seed,
                epoch: trainer.epoch,
                optimizer: OptimizerState {
                    kind: "adam".into(),
                    step: trainer.adam.step,
                    config: trainer.adam.config,
                },
                history: trainer.history.clone(),
                tensors: entries,
            },
            blob,
        }
    }

    /// Rebuilds the network with the stored parameters and buffers.
    pub fn network<T: Scalar>(&self) -> Result<Network<T>> {
        let mut net = Network::new(&self.meta.network, self.meta.in_channels, 0)?;
        let mut s = Scatter {
            checkpoint: self,
            cursor: 0,
            error: None,
        };
        net.visit(&mut s);
        match s.error {
            Some(e) => Err(e),
            None => Ok(net),
        }
    }

    /// Restores the full training state for resumption.
    pub fn trainer<T: Scalar>(&self) -> Result<Trainer<T>> {
        let network = self.network::<T>()?;
        let mut shapes = Vec::new();
        network.clone().visit(&mut |name: &str, p: &mut Param<T>| shapes.push((name.to_string(), p.len())));
        let mut s = Scatter {
            checkpoint: self,
            cursor: self.meta.tensors.iter().take_while(|e| matches!(e.role, TensorRole::Param | TensorRole::Buffer)).count(),
            error: None,
        };
        let mut adam = Adam::new(self.meta.optimizer.config);
        adam.step = self.meta.optimizer.step;
        if adam.step > 0 {
            for role in [TensorRole::AdamM, TensorRole::AdamV] {
                for (name, len) in &shapes {
                    let v = s.take::<T>(name, role, *len).unwrap_or_default();
                    match role {
                        TensorRole::AdamM => adam.m.push(v),
                        _ => adam.v.push(v),
                    }
                }
            }
        }
        if let Some(e) = s.error {
            return Err(e);
        }
        Ok(Trainer {
            network,
            adam,
            representation: self.meta.representation.clone(),
            training: self.meta.training.clone(),
            seed: self.meta.seed,
            epoch: self.meta.epoch,
            history: self.meta.history.clone(),
        })
    }

    pub fn params_bytes(&self) -> Vec<u8> {
        self.blob.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn meta_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json("checkpoint metadata", e))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(CHECKPOINT_JSON);
        fs::write(&json, self.meta_json()? + "\n").map_err(|e| Error::io(&json, e))?;
        let bin = dir.join(CHECKPOINT_PARAMS);
        fs::write(&bin, self.params_bytes()).map_err(|e| Error::io(&bin, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let json = dir.join(CHECKPOINT_JSON);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(json.display().to_string(), e))?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if format != CHECKPOINT_FORMAT || version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::FormatVersion {
                what: "checkpoint",
                found: format!("{format} v{version}"),
                expected: format!("{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"),
            });
        }
        let meta: CheckpointMeta = serde_json::from_value(value).map_err(|e| Error::json(json.display().to_string(), e))?;
        let bin = dir.join(CHECKPOINT_PARAMS);
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Checkpoint(format!("{} is not a whole number of f32 values", bin.display())));
        }
        let blob: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let needed = meta
            .tensors
            .iter()
            .map(|e| e.offset / 4 + e.shape.iter().product::<usize>())
            .max()
            .unwrap_or(0);
        if needed > blob.len() {
            return Err(Error::Checkpoint(format!(
                "{} holds {} values but the manifest needs {needed}",
                bin.display(),
                blob.len()
            )));
        }
        Ok(Checkpoint { meta, blob })
    }
}
