//! Occupancy grids, logit grids and the object category vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The thirteen object categories of the reference dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Airplane,
    Bench,
    Cabinet,
    Car,
    Chair,
    Display,
    Lamp,
    Speaker,
    Rifle,
    Sofa,
    Table,
    Telephone,
    Watercraft,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Airplane,
        Category::Bench,
        Category::Cabinet,
        Category::Car,
        Category::Chair,
        Category::Display,
        Category::Lamp,
        Category::Speaker,
        Category::Rifle,
        Category::Sofa,
        Category::Table,
        Category::Telephone,
        Category::Watercraft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Airplane => "airplane",
            Category::Bench => "bench",
            Category::Cabinet => "cabinet",
            Category::Car => "car",
            Category::Chair => "chair",
            Category::Display => "display",
            Category::Lamp => "lamp",
            Category::Speaker => "speaker",
            Category::Rifle => "rifle",
            Category::Sofa => "sofa",
            Category::Table => "table",
            Category::Telephone => "telephone",
            Category::Watercraft => "watercraft",
        }
    }

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName {
                what: "category",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A `D × D × D` boolean occupancy grid, stored x-fastest, then y, then z.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    resolution: usize,
    cells: Vec<bool>,
}

impl fmt::Debug for VoxelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelGrid")
            .field("resolution", &self.resolution)
            .field("occupied", &self.occupied_count())
            .finish()
    }
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Self {
        VoxelGrid {
            resolution,
            cells: vec![false; resolution.pow(3)],
        }
    }

    pub fn from_cells(resolution: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != resolution.pow(3) {
            return Err(Error::ShapeMismatch {
                context: "VoxelGrid::from_cells",
                detail: format!("{} cells for resolution {resolution}", cells.len()),
            });
        }
        Ok(VoxelGrid { resolution, cells })
    }

    pub fn from_fn(resolution: usize, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut grid = Self::empty(resolution);
        for z in 0..resolution {
            for y in 0..resolution {
                for x in 0..resolution {
                    grid.cells[x + resolution * (y + resolution * z)] = f(x, y, z);
                }
            }
        }
        grid
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.cells[i] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|c| *c)
    }

    /// Mirror about the mid-plane perpendicular to `axis`.
    pub fn mirrored(&self, axis: Axis) -> Self {
        let d = self.resolution;
        VoxelGrid::from_fn(d, |x, y, z| match axis {
            Axis::X => self.get(d - 1 - x, y, z),
            Axis::Y => self.get(x, d - 1 - y, z),
            Axis::Z => self.get(x, y, d - 1 - z),
        })
    }

    /// Whether the occupied cells form one 6-connected component.
    /// An empty grid is not connected.
    pub fn is_connected(&self) -> bool {
        let d = self.resolution;
        let Some(start) = self.cells.iter().position(|c| *c) else {
            return false;
        };
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (x, y, z) = (i % d, (i / d) % d, i / (d * d));
            let mut visit = |nx: usize, ny: usize, nz: usize| {
                let j = nx + d * (ny + d * nz);
                if self.cells[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(x - 1, y, z);
            }
            if x + 1 < d {
                visit(x + 1, y, z);
            }
            if y > 0 {
                visit(x, y - 1, z);
            }
            if y + 1 < d {
                visit(x, y + 1, z);
            }
            if z > 0 {
                visit(x, y, z - 1);
            }
            if z + 1 < d {
                visit(x, y, z + 1);
            }
        }
        reached == self.occupied_count()
    }
}

/// Real-valued network output over a `D × D × D` grid, same layout as
/// [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrid<T> {
    resolution: usize,
    values: Vec<T>,
}

impl<T: Scalar> LogitGrid<T> {
    pub fn new(resolution: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != resolution.pow(3) {
            return Err(Error::ShapeMismatch {
                context: "LogitGrid::new",
                detail: format!("{} values for resolution {resolution}", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("logits", format!("non-finite value at index {i}")));
        }
        Ok(LogitGrid { resolution, values })
    }

    pub fn filled(resolution: usize, value: T) -> Self {
        LogitGrid {
            resolution,
            values: vec![value; resolution.pow(3)],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn cast<U: Scalar>(&self) -> LogitGrid<U> {
        LogitGrid {
            resolution: self.resolution,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}
