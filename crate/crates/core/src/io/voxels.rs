//! Voxel label files: a `.vox.json` sidecar plus a bit-packed `.vox.bin`
//! payload (x fastest, then y, then z; bit 0 of byte 0 is voxel (0,0,0)).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

pub const VOXEL_FORMAT: &str = "VOX1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelSidecar {
    pub format: String,
    pub resolution: usize,
    pub category: Option<String>,
    pub object_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelRecord {
    pub grid: VoxelGrid,
    pub category: Option<String>,
    pub object_id: Option<String>,
}

/// Resolves `<stem>.vox.json` / `<stem>.vox.bin` from either file name or
/// the bare stem.
pub fn voxel_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let s = path.as_ref().to_string_lossy().into_owned();
    let stem = s
        .strip_suffix(".vox.json")
        .or_else(|| s.strip_suffix(".vox.bin"))
        .unwrap_or(&s)
        .to_string();
    (PathBuf::from(format!("{stem}.vox.json")), PathBuf::from(format!("{stem}.vox.bin")))
}

pub fn payload_len(resolution: usize) -> usize {
    resolution.pow(3).div_ceil(8)
}

pub fn pack_voxels(grid: &VoxelGrid) -> Vec<u8> {
    let mut bytes = vec![0u8; payload_len(grid.resolution())];
    for (i, _) in grid.cells().iter().enumerate().filter(|(_, c)| **c) {
        bytes[i / 8] |= 1 << (i % 8);
    }
    bytes
}

pub fn unpack_voxels(resolution: usize, bytes: &[u8]) -> Result<VoxelGrid> {
    let expected = payload_len(resolution);
    if bytes.len() != expected {
        return Err(Error::VoxelPayloadLength {
            resolution,
            expected,
            found: bytes.len(),
        });
    }
    let n = resolution.pow(3);
    if n % 8 != 0 && bytes[n / 8] >> (n % 8) != 0 {
        return Err(Error::VoxelPadding);
    }
    let cells = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    VoxelGrid::from_cells(resolution, cells)
}

pub fn write_voxel_record(record: &VoxelRecord, path: impl AsRef<Path>) -> Result<()> {
    let (json_path, bin_path) = voxel_paths(path);
    let sidecar = VoxelSidecar {
        format: VOXEL_FORMAT.into(),
        resolution: record.grid.resolution(),
        category: record.category.clone(),
        object_id: record.object_id.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json("voxel sidecar", e))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    fs::write(&bin_path, pack_voxels(&record.grid)).map_err(|e| Error::io(&bin_path, e))
}

pub fn write_voxels(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    write_voxel_record(
        &VoxelRecord {
            grid: grid.clone(),
            category: None,
            object_id: None,
        },
        path,
    )
}

pub fn read_voxel_record(path: impl AsRef<Path>) -> Result<VoxelRecord> {
    let (json_path, bin_path) = voxel_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: VoxelSidecar =
        serde_json::from_str(&text).map_err(|e| Error::json(json_path.display().to_string(), e))?;
    if sidecar.format != VOXEL_FORMAT {
        return Err(Error::FormatVersion {
            what: "voxel sidecar",
            found: sidecar.format,
            expected: VOXEL_FORMAT.into(),
        });
    }
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    Ok(VoxelRecord {
        grid: unpack_voxels(sidecar.resolution, &bytes)?,
        category: sidecar.category,
        object_id: sidecar.object_id,
    })
}

pub fn read_voxels(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    read_voxel_record(path).map(|r| r.grid)
}
