//! Single-file containers: one JSON header line followed by raw
//! little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::{FrameMode, FrameStack, ValueRange};
use crate::scalar::Scalar;
use crate::voxel::LogitGrid;

pub const FRAME_STACK_FORMAT: &str = "FRAMESTACK1";
pub const LOGITS_FORMAT: &str = "LOGITS1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameStackHeader {
    pub format: String,
    pub mode: FrameMode,
    /// Time windows.
    pub n: usize,
    pub planes: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub value_range: ValueRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitsHeader {
    pub format: String,
    pub resolution: usize,
    pub category: Option<String>,
    pub object_id: Option<String>,
}

fn encode<H: Serialize, T: Scalar>(header: &H, values: &[T]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header).map_err(|e| Error::json("container header", e))?;
    out.push(b'\n');
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f32>, usize)> {
    let newline = bytes.iter().position(|b| *b == b'\n').ok_or(Error::MalformedHeader {
        line: 1,
        reason: "missing header line".into(),
    })?;
    let header = serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::json("container header", e))?;
    let body = &bytes[newline + 1..];
    if body.len() % 4 != 0 {
        return Err(Error::TruncatedPayload {
            offset: newline + 1,
            expected: body.len().next_multiple_of(4),
            found: body.len(),
        });
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values, newline + 1))
}

pub fn encode_frame_stack<T: Scalar>(stack: &FrameStack<T>) -> Result<Vec<u8>> {
    let header = FrameStackHeader {
        format: FRAME_STACK_FORMAT.into(),
        mode: stack.mode(),
        n: stack.window_count(),
        planes: stack.planes(),
        height: stack.height(),
        width: stack.width(),
        value_range: stack.value_range(),
    };
    encode(&header, stack.data())
}

pub fn decode_frame_stack(bytes: &[u8]) -> Result<FrameStack<f32>> {
    let (header, values, offset): (FrameStackHeader, _, _) = decode(bytes)?;
    if header.format != FRAME_STACK_FORMAT {
        return Err(Error::FormatVersion {
            what: "frame stack",
            found: header.format,
            expected: FRAME_STACK_FORMAT.into(),
        });
    }
    let expected = header.planes * header.height * header.width;
    if values.len() != expected || header.n * header.mode.planes_per_window() != header.planes {
        return Err(Error::TruncatedPayload {
            offset,
            expected: expected * 4,
            found: values.len() * 4,
        });
    }
    FrameStack::new(header.mode, header.value_range, header.planes, header.height, header.width, values)
}

pub fn write_frame_stack<T: Scalar>(stack: &FrameStack<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_frame_stack(stack)?).map_err(|e| Error::io(path, e))
}

pub fn read_frame_stack(path: impl AsRef<Path>) -> Result<FrameStack<f32>> {
    let path = path.as_ref();
    decode_frame_stack(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_logits<T: Scalar>(logits: &LogitGrid<T>, category: Option<&str>, object_id: Option<&str>) -> Result<Vec<u8>> {
    let header = LogitsHeader {
        format: LOGITS_FORMAT.into(),
        resolution: logits.resolution(),
        category: category.map(str::to_string),
        object_id: object_id.map(str::to_string),
    };
    encode(&header, logits.values())
}

pub fn decode_logits(bytes: &[u8]) -> Result<(LogitsHeader, LogitGrid<f32>)> {
    let (header, values, offset): (LogitsHeader, _, _) = decode(bytes)?;
    if header.format != LOGITS_FORMAT {
        return Err(Error::FormatVersion {
            what: "logits",
            found: header.format,
            expected: LOGITS_FORMAT.into(),
        });
    }
    if values.len() != header.resolution.pow(3) {
        return Err(Error::TruncatedPayload {
            offset,
            expected: header.resolution.pow(3) * 4,
            found: values.len() * 4,
        });
    }
    let grid = LogitGrid::new(header.resolution, values)?;
    Ok((header, grid))
}

pub fn write_logits<T: Scalar>(
    logits: &LogitGrid<T>,
    category: Option<&str>,
    object_id: Option<&str>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_logits(logits, category, object_id)?).map_err(|e| Error::io(path, e))
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<(LogitsHeader, LogitGrid<f32>)> {
    let path = path.as_ref();
    decode_logits(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
