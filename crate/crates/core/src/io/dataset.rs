//! Directory-based dataset layout: `<root>/<split>/<category>/<object_id>.evb`
//! next to `<object_id>.vox.json` / `<object_id>.vox.bin`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "split",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub events: PathBuf,
    /// Path of the `.vox.json` sidecar.
    pub voxels: PathBuf,
    pub category: Category,
    pub object_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Event files without a matching voxel label.
    pub skipped_orphans: usize,
}

impl Manifest {
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(path, e)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

/// Walks a dataset tree and pairs every event file with its voxel label.
/// Unknown split or category directories are skipped with a warning.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    let mut manifest = Manifest::default();
    for split_dir in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = split_dir.file_name().unwrap().to_string_lossy().into_owned();
        let Ok(split) = name.parse::<Split>() else {
            warn!("ignoring unknown split directory {}", split_dir.display());
            continue;
        };
        for cat_dir in sorted_dir(&split_dir)?.into_iter().filter(|p| p.is_dir()) {
            let cname = cat_dir.file_name().unwrap().to_string_lossy().into_owned();
            let Ok(category) = cname.parse::<Category>() else {
                warn!("ignoring unknown category directory {}", cat_dir.display());
                continue;
            };
            for file in sorted_dir(&cat_dir)? {
                let ext = file.extension().and_then(|e| e.to_str());
                if !matches!(ext, Some("evb") | Some("evt")) {
                    continue;
                }
                let object_id = file.file_stem().unwrap().to_string_lossy().into_owned();
                let voxels = cat_dir.join(format!("{object_id}.vox.json"));
                if !voxels.is_file() {
                    warn!("skipping {}: no voxel label", file.display());
                    manifest.skipped_orphans += 1;
                    continue;
                }
                manifest.entries.push(ManifestEntry {
                    events: file,
                    voxels,
                    category,
                    object_id,
                    split,
                });
            }
        }
    }
    Ok(manifest)
}

/// Deterministic per-category split sizes for `count` objects:
/// `round(count·train)` train, `round(count·val)` val, the rest test.
pub fn split_counts(count: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("split_ratios", format!("{ratios:?} must be non-negative and sum to 1")));
    }
    let n = count as f64;
    let train = ((n * ratios[0]).round() as usize).min(count);
    let val = ((n * ratios[1]).round() as usize).min(count - train);
    Ok([train, val, count - train - val])
}
