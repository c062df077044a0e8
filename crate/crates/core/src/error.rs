use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("event {index} at t={t} precedes the previous event at t={previous}")]
    UnsortedEvents { index: usize, t: f64, previous: f64 },

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    EventOutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("event {index} has timestamp {t} outside [0, {duration}]")]
    TimestampOutOfRange { index: usize, t: f64, duration: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },

    #[error("line {line}: malformed event record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("line {line}: event ({x}, {y}) outside the {width}x{height} sensor")]
    RecordOutOfBounds {
        line: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("line {line}: timestamp {t} is earlier than the previous {previous}")]
    NonMonotoneTimestamp { line: usize, t: f64, previous: f64 },

    #[error("line {line}: timestamp {t} is negative or beyond the declared duration {duration}")]
    RecordTimestampOutOfRange { line: usize, t: f64, duration: f64 },

    #[error("byte offset {offset}: bad magic {found:?}")]
    BadMagic { offset: usize, found: Vec<u8> },

    #[error("byte offset {offset}: truncated payload, expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("byte offset {offset}: {found} trailing bytes after the declared records")]
    TrailingBytes { offset: usize, found: usize },

    #[error("byte offset {offset}: invalid polarity byte {value}")]
    InvalidPolarity { offset: usize, value: i8 },

    #[error("byte offset {offset}: event ({x}, {y}) outside the {width}x{height} sensor")]
    BinaryOutOfBounds {
        offset: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("byte offset {offset}: timestamp {t} is earlier than the previous {previous}")]
    BinaryNonMonotone { offset: usize, t: f64, previous: f64 },

    #[error("byte offset {offset}: invalid timestamp {t} for duration {duration}")]
    BinaryTimestampOutOfRange { offset: usize, t: f64, duration: f64 },

    #[error("voxel payload holds {found} bytes but resolution {resolution} requires {expected}")]
    VoxelPayloadLength {
        resolution: usize,
        expected: usize,
        found: usize,
    },

    #[error("voxel payload has nonzero padding bits in its final byte")]
    VoxelPadding,

    #[error("unsupported format version {found} in {what} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: String,
        expected: String,
    },

    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },

    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: &'static str, detail: String },

    #[error("resolution mismatch: prediction {prediction} vs label {label}")]
    ResolutionMismatch { prediction: usize, label: usize },

    #[error("{split} split is empty")]
    EmptySplit { split: String },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}: {diagnostics}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        diagnostics: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
