//! In-memory events, event streams and time-window partitioning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sensor geometry of the reference dataset.
pub const DEFAULT_SENSOR_SIZE: u16 = 512;
/// Default stream duration in seconds.
pub const DEFAULT_DURATION: f64 = 0.5;
/// Default time window in seconds (100 windows over 0.5 s).
pub const DEFAULT_WINDOW_LENGTH: f64 = 5.0e-3;

/// Tolerance, in units of one window, for snapping timestamps that sit a
/// rounding error below a window boundary onto that boundary.
const BOUNDARY_SNAP: f64 = 1e-9;

/// Relative tolerance for a duration that is a whole number of windows.
/// `.evb` headers store the duration as f32 rounded up, which can exceed
/// the intended value by one f32 ulp (≈ 1.2e-7 relative).
const DURATION_SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(value: i64) -> Option<Self> {
        match value {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn inverted(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A single brightness-change record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// Timestamp in seconds.
    pub t: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, polarity: Polarity) -> Self {
        Event { x, y, t, polarity }
    }
}

/// A time-ordered event sequence together with its sensor geometry.
///
/// Construction validates ordering, bounds and duration, so every stream in
/// circulation satisfies those invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    duration: f64,
    pub category: Option<String>,
    pub object_id: Option<String>,
}

impl EventStream {
    /// Builds a stream from events that are already sorted by timestamp.
    pub fn new(width: u16, height: u16, duration: f64, events: Vec<Event>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("sensor size", "width and height must be positive"));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::invalid("duration", format!("{duration} is not a non-negative finite value")));
        }
        check_sorted(&events)?;
        for (index, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::EventOutOfBounds {
                    index,
                    x: e.x.into(),
                    y: e.y.into(),
                    width: width.into(),
                    height: height.into(),
                });
            }
            if !(e.t >= 0.0 && e.t <= duration) {
                return Err(Error::TimestampOutOfRange {
                    index,
                    t: e.t,
                    duration,
                });
            }
        }
        Ok(EventStream {
            events,
            width,
            height,
            duration,
            category: None,
            object_id: None,
        })
    }

    /// Builds a stream from events in arbitrary order; ties keep their input
    /// order.
    pub fn from_unsorted(width: u16, height: u16, duration: f64, mut events: Vec<Event>) -> Result<Self> {
        if events.iter().any(|e| e.t.is_nan()) {
            return Err(Error::invalid("events", "NaN timestamp"));
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self::new(width, height, duration, events)
    }

    pub fn empty(width: u16, height: u16, duration: f64) -> Result<Self> {
        Self::new(width, height, duration, Vec::new())
    }

    pub fn with_labels(mut self, category: Option<String>, object_id: Option<String>) -> Self {
        self.category = category;
        self.object_id = object_id;
        self
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

fn check_sorted(events: &[Event]) -> Result<()> {
    for (index, pair) in events.windows(2).enumerate() {
        // `!(a <= b)` also catches NaN.
        if !(pair[0].t <= pair[1].t) {
            return Err(Error::UnsortedEvents {
                index: index + 1,
                t: pair[1].t,
                previous: pair[0].t,
            });
        }
    }
    Ok(())
}

/// Fixed-length, half-open time windows `[start + k·w, start + (k+1)·w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindowPartition {
    pub window_length: f64,
    pub window_count: usize,
    pub start_time: f64,
}

impl TimeWindowPartition {
    /// Covers `[0, duration]` with `ceil(duration / window_length)` windows.
    pub fn new(window_length: f64, duration: f64) -> Result<Self> {
        Self::starting_at(window_length, duration, 0.0)
    }

    pub fn starting_at(window_length: f64, duration: f64, start_time: f64) -> Result<Self> {
        if !(window_length.is_finite() && window_length > 0.0) {
            return Err(Error::invalid("window_length", format!("{window_length} must be positive")));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::invalid("duration", format!("{duration} must be non-negative")));
        }
        let ratio = duration / window_length;
        let count = if (ratio - ratio.round()).abs() < DURATION_SNAP * ratio.max(1.0) {
            ratio.round()
        } else {
            ratio.ceil()
        };
        Ok(TimeWindowPartition {
            window_length,
            window_count: (count as usize).max(1),
            start_time,
        })
    }

    /// Window index of a timestamp; timestamps at or past the final boundary
    /// land in the last window.
    pub fn window_of(&self, t: f64) -> usize {
        let r = (t - self.start_time) / self.window_length;
        if r <= 0.0 {
            return 0;
        }
        let mut k = r.floor();
        if k + 1.0 - r < BOUNDARY_SNAP {
            k += 1.0;
        }
        (k as usize).min(self.window_count - 1)
    }

    /// Splits time-sorted events into one contiguous slice per window.
    pub fn split<'a>(&self, events: &'a [Event]) -> Result<Vec<&'a [Event]>> {
        check_sorted(events)?;
        let mut groups = Vec::with_capacity(self.window_count);
        let mut begin = 0;
        for window in 0..self.window_count {
            let end = begin + events[begin..].partition_point(|e| self.window_of(e.t) <= window);
            groups.push(&events[begin..end]);
            begin = end;
        }
        debug_assert_eq!(begin, events.len());
        Ok(groups)
    }
}

/// Partitions a stream into `ceil(duration / window_length)` timestamp
/// windows.
pub fn partition(stream: &EventStream, window_length: f64) -> Result<Vec<&[Event]>> {
    TimeWindowPartition::new(window_length, stream.duration())?.split(stream.events())
}

/// Count-based alternative: consecutive groups of `events_per_window`
/// events (the final group may be shorter).
pub fn partition_by_count(events: &[Event], events_per_window: usize) -> Result<Vec<&[Event]>> {
    if events_per_window == 0 {
        return Err(Error::invalid("events_per_window", "must be positive"));
    }
    check_sorted(events)?;
    Ok(events.chunks(events_per_window).collect())
}

/// The last event at every pixel of a group, keyed by `(x, y)`.
///
/// "Last" means greatest timestamp; equal timestamps resolve to the later
/// position in the input.
pub fn last_event_per_pixel(group: &[Event]) -> BTreeMap<(u16, u16), Event> {
    let mut last: BTreeMap<(u16, u16), Event> = BTreeMap::new();
    for e in group {
        last.entry((e.x, e.y))
            .and_modify(|cur| {
                if e.t >= cur.t {
                    *cur = *e;
                }
            })
            .or_insert(*e);
    }
    last
}
