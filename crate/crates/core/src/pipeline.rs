//! End-to-end plumbing: synthetic dataset trees, sample loading and
//! training from a manifest.

use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;

use crate::config::{DatasetConfig, RunConfig};
use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::io::{read_events, read_voxel_record, scan_dataset, split_counts, write_events, write_voxel_record};
use crate::io::{EventFormat, Manifest, ManifestEntry, Split, VoxelRecord};
use crate::neural::{Checkpoint, Sample, Trainer};
use crate::representation::RepresentationConfig;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::synth::{generate_category_object, simulate_scan, ScanConfig};
use crate::voxel::Category;

const OBJECT_STREAM: u64 = 10;
const SCAN_STREAM: u64 = 11;

pub fn object_id(category: Category, index: usize) -> String {
    format!("{category}_{index:04}")
}

/// The `index`-th synthetic object of a category and its scan.
pub fn simulate_pair(dataset: &DatasetConfig, seed: u64, category: Category, index: usize) -> Result<(EventStream, VoxelRecord)> {
    let c = category.index() as u64;
    let i = index as u64;
    let object = generate_category_object(derive_seed(seed, &[OBJECT_STREAM, c, i]), dataset.resolution, category)?;
    let id = object_id(category, index);
    let stream = simulate_scan(&ScanConfig {
        seed: derive_seed(seed, &[SCAN_STREAM, c, i]),
        object: object.clone(),
        settings: dataset.scan.clone(),
    })?
    .with_labels(Some(category.to_string()), Some(id.clone()));
    Ok((
        stream,
        VoxelRecord {
            grid: object,
            category: Some(category.to_string()),
            object_id: Some(id),
        },
    ))
}

/// Simulates `per_category` objects for every configured category into
/// `<root>/<split>/<category>/<object_id>.{evb,vox.json,vox.bin}`, with the
/// first objects of each category in train, then val, then test.
pub fn build_dataset(root: impl AsRef<Path>, dataset: &DatasetConfig, seed: u64) -> Result<Manifest> {
    let root = root.as_ref();
    let [train, val, _] = split_counts(dataset.per_category, dataset.split_ratios)?;
    let jobs: Vec<(Category, usize)> = dataset
        .categories
        .iter()
        .flat_map(|c| (0..dataset.per_category).map(move |i| (*c, i)))
        .collect();
    info!(
        "simulating {} objects ({} categories x {}) into {}",
        jobs.len(),
        dataset.categories.len(),
        dataset.per_category,
        root.display()
    );
    jobs.par_iter()
        .map(|&(category, i)| {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            let dir = root.join(split.name()).join(category.name());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let (stream, record) = simulate_pair(dataset, seed, category, i)?;
            let id = object_id(category, i);
            write_events(&stream, dir.join(format!("{id}.evb")), EventFormat::Binary)?;
            write_voxel_record(&record, dir.join(format!("{id}.vox.json")))
        })
        .collect::<Result<()>>()?;
    scan_dataset(root)
}

pub fn load_sample<T: Scalar>(entry: &ManifestEntry, repr: &RepresentationConfig) -> Result<Sample<T>> {
    let stream = read_events(&entry.events)?;
    let record = read_voxel_record(&entry.voxels)?;
    let frames = repr.base_frames::<T>(&stream)?;
    Sample::new(entry.category, entry.object_id.clone(), frames, record.grid, repr)
}

/// Every sample of one split, in manifest order.
pub fn load_samples<T: Scalar>(manifest: &Manifest, split: Split, repr: &RepresentationConfig) -> Result<Vec<Sample<T>>> {
    manifest.split(split).into_par_iter().map(|e| load_sample(e, repr)).collect()
}

fn check_labels<T: Scalar>(samples: &[Sample<T>], resolution: usize) -> Result<()> {
    match samples.iter().find(|s| s.label.resolution() != resolution) {
        Some(s) => Err(Error::ResolutionMismatch {
            prediction: resolution,
            label: s.label.resolution(),
        }),
        None => Ok(()),
    }
}

/// Trains a fresh network on the train split for the configured epochs,
/// probing the val split each epoch.
pub fn train(manifest: &Manifest, config: &RunConfig, log_every: usize) -> Result<Checkpoint> {
    let mut trainer = Trainer::<f32>::new(&config.network, &config.representation, &config.training, config.seed)?;
    continue_training(&mut trainer, manifest, config.training.epochs, log_every)
}

/// Continues `trainer` up to `epochs` completed epochs.
pub fn continue_training(trainer: &mut Trainer<f32>, manifest: &Manifest, epochs: usize, log_every: usize) -> Result<Checkpoint> {
    let repr = trainer.representation.clone();
    let train = load_samples::<f32>(manifest, Split::Train, &repr)?;
    if train.is_empty() && epochs > trainer.epoch {
        return Err(Error::EmptySplit { split: "train".into() });
    }
    let val = load_samples::<f32>(manifest, Split::Val, &repr)?;
    let resolution = trainer.network.config().resolution;
    check_labels(&train, resolution)?;
    check_labels(&val, resolution)?;
    info!(
        "training on {} samples ({} val), epochs {} -> {epochs}",
        train.len(),
        val.len(),
        trainer.epoch
    );
    trainer.train_to(epochs, &train, &val, log_every)?;
    Ok(Checkpoint::from_trainer(trainer))
}
