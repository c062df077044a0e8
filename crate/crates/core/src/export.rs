//! Mesh and image export of reconstructions. Predicted voxels that are
//! also in the ground truth are green, the rest red; without a ground
//! truth every voxel is grey.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::synth::trace;
use crate::voxel::VoxelGrid;

pub const CORRECT: [u8; 3] = [40, 180, 60];
pub const INCORRECT: [u8; 3] = [210, 50, 40];
pub const UNLABELLED: [u8; 3] = [170, 170, 170];

fn colour(pred_cell: [usize; 3], gt: Option<&VoxelGrid>) -> [u8; 3] {
    match gt {
        None => UNLABELLED,
        Some(g) if g.get(pred_cell[0], pred_cell[1], pred_cell[2]) => CORRECT,
        Some(_) => INCORRECT,
    }
}

fn check(pred: &VoxelGrid, gt: Option<&VoxelGrid>) -> Result<()> {
    match gt {
        Some(g) if g.resolution() != pred.resolution() => Err(Error::ResolutionMismatch {
            prediction: pred.resolution(),
            label: g.resolution(),
        }),
        _ => Ok(()),
    }
}

/// Quads on the boundary of the occupied set: four corners and a colour.
struct Mesh {
    quads: Vec<([[usize; 3]; 4], [u8; 3])>,
}

fn boundary_mesh(pred: &VoxelGrid, gt: Option<&VoxelGrid>) -> Mesh {
    let d = pred.resolution();
    let mut quads = Vec::new();
    for z in 0..d {
        for y in 0..d {
            for x in 0..d {
                if !pred.get(x, y, z) {
                    continue;
                }
                let c = [x, y, z];
                let rgb = colour(c, gt);
                for axis in 0..3 {
                    for positive in [false, true] {
                        let neighbour_occupied = if positive {
                            c[axis] + 1 < d && {
                                let mut n = c;
                                n[axis] += 1;
                                pred.get(n[0], n[1], n[2])
                            }
                        } else {
                            c[axis] > 0 && {
                                let mut n = c;
                                n[axis] -= 1;
                                pred.get(n[0], n[1], n[2])
                            }
                        };
                        if neighbour_occupied {
                            continue;
                        }
                        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut base = c;
                        if positive {
                            base[axis] += 1;
                        }
                        let corner = |du: usize, dv: usize| {
                            let mut p = base;
                            p[u] += du;
                            p[v] += dv;
                            p
                        };
                        let mut q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if !positive {
                            q.reverse();
                        }
                        quads.push((q, rgb));
                    }
                }
            }
        }
    }
    Mesh { quads }
}

/// ASCII PLY mesh with per-vertex colours.
pub fn to_ply(pred: &VoxelGrid, gt: Option<&VoxelGrid>) -> Result<String> {
    check(pred, gt)?;
    let mesh = boundary_mesh(pred, gt);
    let mut out = String::new();
    let n = mesh.quads.len();
    writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", 4 * n).unwrap();
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    writeln!(out, "element face {n}\nproperty list uchar int vertex_indices\nend_header").unwrap();
    for (q, c) in &mesh.quads {
        for p in q {
            writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2]).unwrap();
        }
    }
    for i in 0..n {
        writeln!(out, "4 {} {} {} {}", 4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3).unwrap();
    }
    Ok(out)
}

/// Wavefront OBJ mesh; colours use the widespread `v x y z r g b`
/// extension.
pub fn to_obj(pred: &VoxelGrid, gt: Option<&VoxelGrid>) -> Result<String> {
    check(pred, gt)?;
    let mesh = boundary_mesh(pred, gt);
    let mut out = String::from("# voxel reconstruction\n");
    for (q, c) in &mesh.quads {
        for p in q {
            let rgb = c.map(|v| f64::from(v) / 255.0);
            writeln!(out, "v {} {} {} {:.4} {:.4} {:.4}", p[0], p[1], p[2], rgb[0], rgb[1], rgb[2]).unwrap();
        }
    }
    for i in 0..mesh.quads.len() {
        writeln!(out, "f {} {} {} {}", 4 * i + 1, 4 * i + 2, 4 * i + 3, 4 * i + 4).unwrap();
    }
    Ok(out)
}

/// Orthographic shaded view from azimuth 45° and elevation 30°, white
/// background.
pub fn render_image(pred: &VoxelGrid, gt: Option<&VoxelGrid>, size: usize) -> Result<RgbImage> {
    check(pred, gt)?;
    let d = pred.resolution() as f64;
    let (az, el) = (45f64.to_radians(), 30f64.to_radians());
    let (st, ct) = az.sin_cos();
    let (se, ce) = el.sin_cos();
    let view = [ct * ce, st * ce, se];
    let right = [-st, ct, 0.0];
    let up = [-ct * se, -st * se, ce];
    let dir = view.map(|v| -v);
    let pixel = d * 3f64.sqrt() / size as f64;
    let mut img = RgbImage::from_pixel(size as u32, size as u32, Rgb([255, 255, 255]));
    for row in 0..size {
        let v = (size as f64 / 2.0 - row as f64 - 0.5) * pixel;
        for col in 0..size {
            let u = (col as f64 + 0.5 - size as f64 / 2.0) * pixel;
            let origin: [f64; 3] = std::array::from_fn(|i| d / 2.0 + u * right[i] + v * up[i] + 2.0 * d * view[i]);
            if let Some((_, face, cell)) = trace(pred, origin, dir) {
                let shade = 0.35 + 0.65 * dir[face].abs();
                let c = colour(cell, gt).map(|v| (f64::from(v) * shade).round() as u8);
                img.put_pixel(col as u32, row as u32, Rgb(c));
            }
        }
    }
    Ok(img)
}

pub fn write_ply(pred: &VoxelGrid, gt: Option<&VoxelGrid>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_ply(pred, gt)?).map_err(|e| Error::io(path, e))
}

pub fn write_obj(pred: &VoxelGrid, gt: Option<&VoxelGrid>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_obj(pred, gt)?).map_err(|e| Error::io(path, e))
}

pub fn write_png(pred: &VoxelGrid, gt: Option<&VoxelGrid>, size: usize, path: impl AsRef<Path>) -> Result<()> {
    render_image(pred, gt, size)?.save(path.as_ref())?;
    Ok(())
}
