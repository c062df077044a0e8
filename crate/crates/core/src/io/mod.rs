//! On-disk formats: event streams, voxel labels, frame stacks, logits and
//! the dataset directory layout.

mod dataset;
mod events;
mod frames;
mod voxels;

pub use dataset::{scan_dataset, split_counts, Manifest, ManifestEntry, Split};
pub use events::{
    decode_evb, decode_evt, encode_evb, encode_evt, read_events, write_events, EventFormat, EVB_HEADER_LEN,
    EVB_RECORD_LEN,
};
pub use frames::{
    decode_frame_stack, decode_logits, encode_frame_stack, encode_logits, read_frame_stack, read_logits,
    write_frame_stack, write_logits, FrameStackHeader, LogitsHeader,
};
pub use voxels::{
    pack_voxels, payload_len, read_voxel_record, read_voxels, unpack_voxels, voxel_paths, write_voxel_record,
    write_voxels, VoxelRecord, VoxelSidecar,
};
