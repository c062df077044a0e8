//! Declarative run configuration. Files are JSON or TOML; every key is
//! optional except `seed` and is merged over the chosen preset before
//! strict deserialisation (unknown keys are rejected).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::ThresholdSweepConfig;
use crate::neural::{NetworkConfig, TrainingConfig};
use crate::representation::{AugmentOp, FrameMode, RepresentationConfig, SobelNormalization};
use crate::synth::ScanSettings;
use crate::voxel::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::UnknownName {
                what: "preset",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Voxel resolution D of the synthetic objects.
    pub resolution: usize,
    /// Objects simulated per category.
    pub per_category: usize,
    /// Train / val / test fractions.
    pub split_ratios: [f64; 3],
    pub categories: Vec<Category>,
    pub scan: ScanSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub representation: RepresentationConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub evaluation: ThresholdSweepConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        match preset {
            Preset::Desk => RunConfig {
                preset,
                seed,
                dataset: DatasetConfig {
                    resolution: 32,
                    per_category: 8,
                    split_ratios: [0.8, 0.1, 0.1],
                    categories: Category::ALL.to_vec(),
                    scan: ScanSettings::desk(),
                },
                representation: RepresentationConfig {
                    mode: FrameMode::Pos,
                    window_length: 0.0625,
                    sobel: true,
                    sobel_normalization: SobelNormalization::PerPlane,
                    target_size: 32,
                    augment: Vec::new(),
                },
                network: NetworkConfig::desk(),
                training: TrainingConfig::desk(),
                evaluation: ThresholdSweepConfig::default(),
            },
            Preset::Paper => RunConfig {
                preset,
                seed,
                dataset: DatasetConfig {
                    resolution: 32,
                    per_category: 80,
                    split_ratios: [0.8, 0.1, 0.1],
                    categories: Category::ALL.to_vec(),
                    scan: ScanSettings::paper(),
                },
                representation: RepresentationConfig {
                    mode: FrameMode::Pos,
                    window_length: 5e-3,
                    sobel: true,
                    sobel_normalization: SobelNormalization::PerPlane,
                    target_size: 256,
                    augment: AugmentOp::ALL.to_vec(),
                },
                network: NetworkConfig::paper(),
                training: TrainingConfig::paper(),
                evaluation: ThresholdSweepConfig::default(),
            },
        }
    }

    /// Resolves a parsed configuration document: picks the preset named by
    /// its `preset` key (desk when absent), overlays the document and
    /// validates the result.
    pub fn from_value(doc: Value) -> Result<Self> {
        let Value::Object(map) = &doc else {
            return Err(Error::Config("configuration must be a table / object".into()));
        };
        let preset = match map.get("preset") {
            None => Preset::Desk,
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let seed = match map.get("seed") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::Config(format!("seed must be a non-negative integer, got {v}")))?,
            None => return Err(Error::Config("`seed` is mandatory".into())),
        };
        let mut merged = serde_json::to_value(RunConfig::preset(preset, seed)).expect("presets serialise");
        merge(&mut merged, doc);
        let config: RunConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(serde_json::to_value(table).map_err(|e| Error::Config(e.to_string()))?)
    }

    /// Reads `.toml` as TOML and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.resolution < 4 {
            return Err(Error::Config(format!("dataset: resolution {} is below 4", d.resolution)));
        }
        if d.categories.is_empty() {
            return Err(Error::Config("dataset: no categories".into()));
        }
        crate::io::split_counts(d.per_category, d.split_ratios)?;
        d.scan.validate()?;
        let r = &self.representation;
        if !(r.window_length > 0.0) {
            return Err(Error::Config(format!("representation: window_length {} must be positive", r.window_length)));
        }
        if r.target_size == 0 {
            return Err(Error::Config("representation: target_size must be positive".into()));
        }
        self.network.validate()?;
        if self.network.resolution != d.resolution {
            return Err(Error::Config(format!(
                "network resolution {} differs from dataset resolution {}",
                self.network.resolution, d.resolution
            )));
        }
        self.training.validate()?;
        self.evaluation.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }
}

/// Recursively overlays `over` onto `base`; objects merge key by key,
/// everything else is replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
