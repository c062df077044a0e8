//! Seeded voxel object generators.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{Category, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Box,
    Ell,
    Cross,
    SphereShell,
    RandomUnion,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 5] = [
        ShapeFamily::Box,
        ShapeFamily::Ell,
        ShapeFamily::Cross,
        ShapeFamily::SphereShell,
        ShapeFamily::RandomUnion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Ell => "ell",
            ShapeFamily::Cross => "cross",
            ShapeFamily::SphereShell => "sphere-shell",
            ShapeFamily::RandomUnion => "random-union",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "shape family",
                value: s.into(),
            })
    }
}

/// Axis-aligned block of voxels `[min, min + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cuboid {
    pub min: [usize; 3],
    pub size: [usize; 3],
}

impl Cuboid {
    /// Centred in a grid of side `d`; always covers voxel `(d - 1) / 2`.
    pub fn centered(d: usize, size: [usize; 3]) -> Self {
        Cuboid {
            min: size.map(|s| (d - s) / 2),
            size,
        }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] < self.min[i] + self.size[i])
    }

    pub fn volume(&self) -> usize {
        self.size.iter().product()
    }
}

/// Sampled shape parameters, rasterised on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box(Cuboid),
    /// A base slab plus an upright slab at its low-x end.
    Ell { base: Cuboid, upright: Cuboid },
    /// Three orthogonal bars through the centre.
    Cross([Cuboid; 3]),
    /// Voxels whose centre lies between `inner_ratio` and 1 in the
    /// ellipsoidal norm with semi-axes `radii`, around the grid centre.
    SphereShell { radii: [f64; 3], inner_ratio: f64 },
    Union(Vec<Cuboid>),
}

impl Shape {
    pub fn family(&self) -> ShapeFamily {
        match self {
            Shape::Box(_) => ShapeFamily::Box,
            Shape::Ell { .. } => ShapeFamily::Ell,
            Shape::Cross(_) => ShapeFamily::Cross,
            Shape::SphereShell { .. } => ShapeFamily::SphereShell,
            Shape::Union(_) => ShapeFamily::RandomUnion,
        }
    }

    pub fn rasterize(&self, d: usize) -> VoxelGrid {
        let center = (d as f64 - 1.0) / 2.0;
        VoxelGrid::from_fn(d, |x, y, z| {
            let p = [x, y, z];
            match self {
                Shape::Box(c) => c.contains(p),
                Shape::Ell { base, upright } => base.contains(p) || upright.contains(p),
                Shape::Cross(bars) => bars.iter().any(|b| b.contains(p)),
                Shape::Union(boxes) => boxes.iter().any(|b| b.contains(p)),
                Shape::SphereShell { radii, inner_ratio } => {
                    let rho = (0..3)
                        .map(|i| ((p[i] as f64 - center) / radii[i]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    rho >= *inner_ratio && rho <= 1.0
                }
            }
        })
    }
}

/// Per-axis ranges of an object's overall extent, as fractions of the grid
/// side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extents {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Extents {
    pub const ISOTROPIC: Extents = Extents {
        lo: [0.35; 3],
        hi: [0.75; 3],
    };

    const fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Extents { lo, hi }
    }
}

/// Family and extents that characterise each synthetic category.
pub fn category_profile(category: Category) -> (ShapeFamily, Extents) {
    use ShapeFamily as F;
    let e = Extents::new;
    match category {
        Category::Airplane => (F::Cross, e([0.70, 0.70, 0.20], [0.90, 0.90, 0.35])),
        Category::Bench => (F::Ell, e([0.70, 0.30, 0.30], [0.90, 0.45, 0.50])),
        Category::Cabinet => (F::Box, e([0.45, 0.45, 0.60], [0.60, 0.60, 0.80])),
        Category::Car => (F::Box, e([0.70, 0.35, 0.25], [0.90, 0.50, 0.40])),
        Category::Chair => (F::Ell, e([0.40, 0.40, 0.60], [0.55, 0.55, 0.80])),
        Category::Display => (F::Box, e([0.10, 0.60, 0.45], [0.20, 0.85, 0.60])),
        Category::Lamp => (F::Cross, e([0.30, 0.30, 0.70], [0.50, 0.50, 0.90])),
        Category::Speaker => (F::Box, e([0.30, 0.30, 0.55], [0.45, 0.45, 0.75])),
        Category::Rifle => (F::Box, e([0.75, 0.08, 0.12], [0.95, 0.15, 0.22])),
        Category::Sofa => (F::Ell, e([0.35, 0.70, 0.35], [0.50, 0.90, 0.50])),
        Category::Table => (F::RandomUnion, e([0.50, 0.50, 0.15], [0.80, 0.80, 0.60])),
        Category::Telephone => (F::SphereShell, e([0.70, 0.40, 0.40], [0.95, 0.60, 0.60])),
        Category::Watercraft => (F::RandomUnion, e([0.60, 0.20, 0.20], [0.90, 0.35, 0.40])),
    }
}

fn side(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> usize {
    let f = if hi > lo { rng.random_range(lo..hi) } else { lo };
    ((d as f64 * f).round() as usize).clamp(1, d)
}

fn extents(rng: &mut ChaCha8Rng, d: usize, ext: &Extents) -> [usize; 3] {
    [0, 1, 2].map(|i| side(rng, d, ext.lo[i], ext.hi[i]))
}

/// Samples shape parameters of a family within the given extents.
pub fn sample_shape_with(rng: &mut ChaCha8Rng, d: usize, family: ShapeFamily, ext: &Extents) -> Shape {
    match family {
        ShapeFamily::Box => Shape::Box(Cuboid::centered(d, extents(rng, d, ext))),
        ShapeFamily::Ell => {
            let [ex, ey, ez] = extents(rng, d, ext);
            let bbox = Cuboid::centered(d, [ex, ey, ez]);
            let base_h = side(rng, ez, 0.25, 0.45);
            let upright_w = side(rng, ex, 0.2, 0.4);
            Shape::Ell {
                base: Cuboid {
                    min: bbox.min,
                    size: [ex, ey, base_h],
                },
                upright: Cuboid {
                    min: bbox.min,
                    size: [upright_w, ey, ez],
                },
            }
        }
        ShapeFamily::Cross => {
            let [ex, ey, ez] = extents(rng, d, ext);
            let t = side(rng, d, 0.10, 0.18);
            Shape::Cross([
                Cuboid::centered(d, [ex, t.min(ey), t.min(ez)]),
                Cuboid::centered(d, [t.min(ex), ey, t.min(ez)]),
                Cuboid::centered(d, [t.min(ex), t.min(ey), ez]),
            ])
        }
        ShapeFamily::SphereShell => {
            // One draw scales all three semi-axes, so isotropic extents
            // give a sphere.
            let f: f64 = rng.random();
            let radii = [0, 1, 2].map(|i| (d as f64 / 2.0 * (ext.lo[i] + f * (ext.hi[i] - ext.lo[i]))).max(1.5));
            let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
            // At least two voxels of wall keeps the shell 6-connected.
            let wall = rng.random_range(2.0..(2.0f64).max(r_min * 0.5) + 1e-9).min(r_min);
            Shape::SphereShell {
                radii,
                inner_ratio: 1.0 - wall / r_min,
            }
        }
        ShapeFamily::RandomUnion => {
            let count = rng.random_range(2..=4);
            let c = (d - 1) / 2;
            let boxes = (0..count)
                .map(|_| {
                    let size = extents(rng, d, ext);
                    // Every box covers the centre voxel, so the union is
                    // connected.
                    let min = [0, 1, 2].map(|i| {
                        let lo = (c + 1).saturating_sub(size[i]);
                        let hi = c.min(d - size[i]);
                        rng.random_range(lo..=hi)
                    });
                    Cuboid { min, size }
                })
                .collect();
            Shape::Union(boxes)
        }
    }
}

pub fn sample_shape(seed: u64, d: usize, family: ShapeFamily) -> Result<Shape> {
    check_resolution(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_shape_with(&mut rng, d, family, &Extents::ISOTROPIC))
}

/// A connected, non-empty object of the given family; deterministic in
/// `(seed, d, family)`.
pub fn generate_object(seed: u64, d: usize, family: ShapeFamily) -> Result<VoxelGrid> {
    Ok(sample_shape(seed, d, family)?.rasterize(d))
}

/// An object with the family and proportions of a category.
pub fn generate_category_object(seed: u64, d: usize, category: Category) -> Result<VoxelGrid> {
    check_resolution(d)?;
    let (family, ext) = category_profile(category);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_shape_with(&mut rng, d, family, &ext).rasterize(d))
}

fn check_resolution(d: usize) -> Result<()> {
    if d < 4 {
        return Err(Error::invalid("resolution", format!("{d} is below the minimum of 4")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for family in ShapeFamily::ALL {
            assert_eq!(generate_object(1, 8, family).unwrap(), generate_object(1, 8, family).unwrap());
        }
        assert!(generate_object(1, 3, ShapeFamily::Box).is_err());
    }

    #[test]
    fn box_occupancy_is_product_of_sides() {
        for seed in 0..20 {
            let shape = sample_shape(seed, 8, ShapeFamily::Box).unwrap();
            let Shape::Box(c) = shape else { unreachable!() };
            let g = shape.rasterize(8);
            assert_eq!(g.occupied_count(), c.volume());
            let (lo, hi) = (c.min, [0, 1, 2].map(|i| c.min[i] + c.size[i]));
            for z in 0..8 {
                for y in 0..8 {
                    for x in 0..8 {
                        let inside = x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
                        assert_eq!(g.get(x, y, z), inside);
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_shell_matches_brute_force_band_count() {
        for seed in 0..20 {
            let shape = sample_shape(seed, 8, ShapeFamily::SphereShell).unwrap();
            let Shape::SphereShell { radii, inner_ratio } = shape else { unreachable!() };
            assert!(radii.iter().all(|r| *r == radii[0]));
            let (outer, inner) = (radii[0], radii[0] * inner_ratio);
            let mut count = 0;
            for z in 0..8 {
                for y in 0..8 {
                    for x in 0..8 {
                        let dist = ((x as f64 - 3.5).powi(2) + (y as f64 - 3.5).powi(2) + (z as f64 - 3.5).powi(2)).sqrt();
                        if dist >= inner && dist <= outer {
                            count += 1;
                        }
                    }
                }
            }
            assert_eq!(shape.rasterize(8).occupied_count(), count, "seed {seed}");
        }
    }

    #[test]
    fn every_family_and_category_is_connected() {
        for seed in 0..25 {
            for d in [4, 8, 16, 32] {
                for family in ShapeFamily::ALL {
                    let g = generate_object(seed, d, family).unwrap();
                    assert!(g.is_connected(), "{family} d={d} seed={seed}");
                }
                for c in Category::ALL {
                    let g = generate_category_object(seed, d, c).unwrap();
                    assert!(g.is_connected(), "{c} d={d} seed={seed}");
                }
            }
        }
    }

    #[test]
    fn family_names() {
        for f in ShapeFamily::ALL {
            assert_eq!(f.name().parse::<ShapeFamily>().unwrap(), f);
        }
    }
}
