//! `.evt` (ASCII) and `.evb` (little-endian binary) event stream formats.
//!
//! `.evt`: header `EVT1 <width> <height> <duration_s>`, then one
//! `<t_seconds> <x> <y> <p>` line per event with `p` in `{1, -1}`.
//!
//! `.evb`: 16-byte header (`EVB1`, u16 width, u16 height, u32 event count,
//! f32 duration), then 13-byte records (f64 t, u16 x, u16 y, i8 p).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity};

pub const EVT_MAGIC: &str = "EVT1";
pub const EVB_MAGIC: &[u8; 4] = b"EVB1";
pub const EVB_HEADER_LEN: usize = 16;
pub const EVB_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Text,
    Binary,
}

impl EventFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("evt") => Ok(EventFormat::Text),
            Some("evb") => Ok(EventFormat::Binary),
            _ => Err(Error::UnknownName {
                what: "event file extension",
                value: path.display().to_string(),
            }),
        }
    }
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    match EventFormat::from_path(path)? {
        EventFormat::Text => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            decode_evt(&text)
        }
        EventFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_evb(&bytes)
        }
    }
}

pub fn write_events(stream: &EventStream, path: impl AsRef<Path>, format: EventFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        EventFormat::Text => encode_evt(stream).into_bytes(),
        EventFormat::Binary => encode_evb(stream)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Formats with the shortest representation that parses back to the same
/// `f64`, so text round trips are value-exact.
pub fn encode_evt(stream: &EventStream) -> String {
    let mut out = String::with_capacity(32 + stream.len() * 24);
    writeln!(out, "{EVT_MAGIC} {} {} {}", stream.width(), stream.height(), stream.duration()).unwrap();
    for e in stream.events() {
        writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.polarity.sign()).unwrap();
    }
    out
}

pub fn decode_evt(text: &str) -> Result<EventStream> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::MalformedHeader {
        line: 1,
        reason: "empty file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = |reason: String| Error::MalformedHeader { line: 1, reason };
    if fields.len() != 4 || fields[0] != EVT_MAGIC {
        return Err(bad_header(format!("expected `{EVT_MAGIC} <width> <height> <duration>`, got `{header}`")));
    }
    let width: u16 = fields[1].parse().map_err(|_| bad_header(format!("bad width `{}`", fields[1])))?;
    let height: u16 = fields[2].parse().map_err(|_| bad_header(format!("bad height `{}`", fields[2])))?;
    let duration: f64 = fields[3].parse().map_err(|_| bad_header(format!("bad duration `{}`", fields[3])))?;
    if width == 0 || height == 0 || !(duration.is_finite() && duration >= 0.0) {
        return Err(bad_header(format!("invalid geometry {width}x{height}, duration {duration}")));
    }

    let mut events = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (line, raw) in lines {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedRecord { line, reason };
        let mut it = raw.split_whitespace();
        let (Some(t), Some(x), Some(y), Some(p), None) = (it.next(), it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad(format!("expected 4 fields in `{raw}`")));
        };
        let t: f64 = t.parse().map_err(|_| bad(format!("bad timestamp `{t}`")))?;
        let x: u32 = x.parse().map_err(|_| bad(format!("bad x `{x}`")))?;
        let y: u32 = y.parse().map_err(|_| bad(format!("bad y `{y}`")))?;
        let p: i64 = p.parse().map_err(|_| bad(format!("bad polarity `{p}`")))?;
        let polarity = Polarity::from_sign(p).ok_or_else(|| bad(format!("polarity {p} is not 1 or -1")))?;
        if x >= u32::from(width) || y >= u32::from(height) {
            return Err(Error::RecordOutOfBounds {
                line,
                x,
                y,
                width: width.into(),
                height: height.into(),
            });
        }
        if !(t >= previous) {
            return Err(Error::NonMonotoneTimestamp { line, t, previous });
        }
        if !(t >= 0.0 && t <= duration) {
            return Err(Error::RecordTimestampOutOfRange { line, t, duration });
        }
        previous = t;
        events.push(Event::new(x as u16, y as u16, t, polarity));
    }
    EventStream::new(width, height, duration, events)
}

/// Smallest `f32` not below `value`, so a stored duration still covers
/// every timestamp.
fn f32_at_least(value: f64) -> f32 {
    let f = value as f32;
    if f64::from(f) < value {
        f.next_up()
    } else {
        f
    }
}

/// Encodes a stream as `.evb`. Durations that are not exactly
/// representable as `f32` are rounded up to the next `f32`.
pub fn encode_evb(stream: &EventStream) -> Result<Vec<u8>> {
    let count = u32::try_from(stream.len())
        .map_err(|_| Error::invalid("stream", format!("{} events exceed the u32 count field", stream.len())))?;
    let mut out = Vec::with_capacity(EVB_HEADER_LEN + stream.len() * EVB_RECORD_LEN);
    out.extend_from_slice(EVB_MAGIC);
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&f32_at_least(stream.duration()).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.sign() as u8);
    }
    Ok(out)
}

pub fn decode_evb(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < EVB_HEADER_LEN {
        return Err(Error::TruncatedPayload {
            offset: 0,
            expected: EVB_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != EVB_MAGIC {
        return Err(Error::BadMagic {
            offset: 0,
            found: bytes[0..4].to_vec(),
        });
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let duration = f64::from(f32::from_le_bytes(bytes[12..16].try_into().unwrap()));
    if width == 0 || height == 0 || !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::MalformedHeader {
            line: 0,
            reason: format!("invalid geometry {width}x{height}, duration {duration}"),
        });
    }

    let expected = EVB_HEADER_LEN + count * EVB_RECORD_LEN;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            offset: EVB_HEADER_LEN,
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            offset: expected,
            found: bytes.len() - expected,
        });
    }

    let mut events = Vec::with_capacity(count);
    let mut previous = f64::NEG_INFINITY;
    for (i, rec) in bytes[EVB_HEADER_LEN..].chunks_exact(EVB_RECORD_LEN).enumerate() {
        let offset = EVB_HEADER_LEN + i * EVB_RECORD_LEN;
        let t = f64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = rec[12] as i8;
        let polarity = Polarity::from_sign(p.into()).ok_or(Error::InvalidPolarity { offset: offset + 12, value: p })?;
        if x >= width || y >= height {
            return Err(Error::BinaryOutOfBounds {
                offset: offset + 8,
                x: x.into(),
                y: y.into(),
                width: width.into(),
                height: height.into(),
            });
        }
        if !(t >= previous) {
            return Err(Error::BinaryNonMonotone { offset, t, previous });
        }
        if !(t >= 0.0 && t <= duration) {
            return Err(Error::BinaryTimestampOutOfRange { offset, t, duration });
        }
        previous = t;
        events.push(Event::new(x, y, t, polarity));
    }
    EventStream::new(width, height, duration, events)
}
