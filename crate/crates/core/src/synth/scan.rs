//! Orbiting event-camera simulator.
//!
//! The camera looks at the grid centre under orthographic projection from
//! azimuth `θ(t)` and a fixed elevation `e`. Its viewing direction (from the
//! object towards the camera) is `(cos θ cos e, sin θ cos e, sin e)`, image
//! columns run along `(−sin θ, cos θ, 0)` and image rows run against
//! `(−cos θ sin e, −sin θ sin e, cos e)`. At θ = 0 columns follow voxel +y
//! and rows follow voxel −z.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity};
use crate::voxel::VoxelGrid;

/// Sensor and trajectory parameters shared by every scan of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    pub sensor_width: u16,
    pub sensor_height: u16,
    /// Seconds.
    pub duration: f64,
    /// Virtual render rate in Hz.
    pub frame_rate: f64,
    /// Contrast threshold on intensities in `[0, 1]`.
    pub contrast_threshold: f64,
    pub elevation_deg: f64,
    /// Azimuth revolutions over the whole duration; 0 is a static camera.
    pub orbit_turns: f64,
}

impl ScanSettings {
    pub fn desk() -> Self {
        ScanSettings {
            sensor_width: 64,
            sensor_height: 64,
            duration: 0.5,
            frame_rate: 400.0,
            contrast_threshold: 0.1,
            elevation_deg: 20.0,
            orbit_turns: 1.0,
        }
    }

    pub fn paper() -> Self {
        ScanSettings {
            sensor_width: 512,
            sensor_height: 512,
            ..Self::desk()
        }
    }

    /// Number of rendered frames, `round(frame_rate · duration)`.
    pub fn frame_count(&self) -> usize {
        (self.frame_rate * self.duration).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(Error::invalid("sensor size", "must be positive"));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::invalid("duration", format!("{} must be positive", self.duration)));
        }
        if self.frame_count() < 2 {
            return Err(Error::invalid(
                "frame_rate",
                format!("{} Hz over {} s gives fewer than two renders", self.frame_rate, self.duration),
            ));
        }
        if !(self.contrast_threshold > 0.0) {
            return Err(Error::invalid("contrast_threshold", format!("{} must be positive", self.contrast_threshold)));
        }
        if !self.elevation_deg.is_finite() || !self.orbit_turns.is_finite() {
            return Err(Error::invalid("orbit", "elevation and turns must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub seed: u64,
    pub object: VoxelGrid,
    pub settings: ScanSettings,
}

/// Orthographic intensity image of `object`, row-major `height × width`.
/// Background is 0; hit surfaces are shaded by facing ratio and depth into
/// `[0.2, 1]`.
pub fn render_view(object: &VoxelGrid, width: usize, height: usize, azimuth: f64, elevation: f64) -> Vec<f64> {
    let d = object.resolution() as f64;
    let (st, ct) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let view = [ct * ce, st * ce, se];
    let right = [-st, ct, 0.0];
    let up = [-ct * se, -st * se, ce];
    let dir = view.map(|v| -v);

    let extent = d * 3f64.sqrt();
    let pixel = extent / width.min(height) as f64;
    let standoff = 2.0 * d;
    let nearest = standoff - extent / 2.0;

    let mut image = vec![0.0; width * height];
    for row in 0..height {
        let v = (height as f64 / 2.0 - row as f64 - 0.5) * pixel;
        for col in 0..width {
            let u = (col as f64 + 0.5 - width as f64 / 2.0) * pixel;
            let origin: [f64; 3] =
                std::array::from_fn(|i| d / 2.0 + u * right[i] + v * up[i] + standoff * view[i]);
            if let Some((t, face, _)) = trace(object, origin, dir) {
                let depth = ((t - nearest) / extent).clamp(0.0, 1.0);
                image[row * width + col] = 0.2 + 0.8 * dir[face].abs() * (1.0 - 0.3 * depth);
            }
        }
    }
    image
}

/// First occupied voxel along a ray: distance, the axis of the face it was
/// entered through, and the voxel.
pub(crate) fn trace(grid: &VoxelGrid, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, usize, [usize; 3])> {
    let n = grid.resolution() as i64;
    let d = n as f64;
    let (mut t_enter, mut t_exit, mut face) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for i in 0..3 {
        if dir[i] == 0.0 {
            if origin[i] < 0.0 || origin[i] > d {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = (-origin[i] / dir[i], (d - origin[i]) / dir[i]);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        if a > t_enter {
            t_enter = a;
            face = i;
        }
        t_exit = t_exit.min(b);
    }
    if t_enter > t_exit || t_exit < 0.0 {
        return None;
    }
    let mut t = t_enter.max(0.0);
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        cell[i] = ((origin[i] + dir[i] * t).floor() as i64).clamp(0, n - 1);
        if dir[i] > 0.0 {
            step[i] = 1;
            t_next[i] = (cell[i] as f64 + 1.0 - origin[i]) / dir[i];
            t_delta[i] = 1.0 / dir[i];
        } else if dir[i] < 0.0 {
            step[i] = -1;
            t_next[i] = (cell[i] as f64 - origin[i]) / dir[i];
            t_delta[i] = -1.0 / dir[i];
        }
    }
    loop {
        if grid.get(cell[0] as usize, cell[1] as usize, cell[2] as usize) {
            return Some((t, face, cell.map(|c| c as usize)));
        }
        let i = (0..3).min_by(|a, b| t_next[*a].total_cmp(&t_next[*b])).unwrap();
        t = t_next[i];
        cell[i] += step[i];
        face = i;
        if cell[i] < 0 || cell[i] >= n {
            return None;
        }
        t_next[i] += t_delta[i];
    }
}

/// Per-pixel reference-level event model for one inter-frame interval.
///
/// Emits one event per whole multiple of `threshold` between `reference`
/// and `intensity`, at times spread uniformly over `[t0, t0 + dt)`, and
/// moves `reference` by the emitted amount.
#[allow(clippy::too_many_arguments)]
pub fn emit_pixel_events(
    reference: &mut f64,
    intensity: f64,
    threshold: f64,
    x: u16,
    y: u16,
    t0: f64,
    dt: f64,
    rng: &mut impl Rng,
    out: &mut Vec<Event>,
) {
    let delta = intensity - *reference;
    let m = (delta.abs() / threshold + 1e-9).floor() as usize;
    if m == 0 {
        return;
    }
    let polarity = if delta > 0.0 { Polarity::Positive } else { Polarity::Negative };
    for j in 0..m {
        let u: f64 = rng.random();
        out.push(Event::new(x, y, t0 + dt * (j as f64 + u) / m as f64, polarity));
    }
    *reference += f64::from(polarity.sign()) * m as f64 * threshold;
}

/// Renders the orbit and converts brightness changes into an event stream.
pub fn simulate_scan(config: &ScanConfig) -> Result<EventStream> {
    let s = &config.settings;
    s.validate()?;
    let (w, h) = (usize::from(s.sensor_width), usize::from(s.sensor_height));
    let frames = s.frame_count();
    let dt = s.duration / (frames - 1) as f64;
    let elevation = s.elevation_deg.to_radians();
    let render = |k: usize| {
        let azimuth = std::f64::consts::TAU * s.orbit_turns * (k as f64 / (frames - 1) as f64);
        render_view(&config.object, w, h, azimuth, elevation)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reference = render(0);
    let mut events = Vec::new();
    let mut interval = Vec::new();
    for k in 1..frames {
        let image = render(k);
        let t0 = (k - 1) as f64 * dt;
        interval.clear();
        for (i, (r, v)) in reference.iter_mut().zip(&image).enumerate() {
            let (x, y) = ((i % w) as u16, (i / w) as u16);
            emit_pixel_events(r, *v, s.contrast_threshold, x, y, t0, dt, &mut rng, &mut interval);
        }
        interval.sort_by(|a, b| a.t.total_cmp(&b.t));
        events.extend(interval.iter().map(|e| Event { t: e.t.min(s.duration), ..*e }));
    }
    EventStream::new(s.sensor_width, s.sensor_height, s.duration, events)
}
