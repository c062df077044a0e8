//! Sobel Event Frame: horizontal and vertical 3×3 Sobel responses of each
//! event frame, combined into a gradient magnitude and rescaled to
//! `[0, 255]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{FrameStack, ValueRange};

/// The two 3×3 stencils, indexed `[h + 1][w + 1]` for vertical offset `h`
/// and horizontal offset `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SobelKernelPair {
    pub x: [[i32; 3]; 3],
    pub y: [[i32; 3]; 3],
}

impl SobelKernelPair {
    pub const HALF_EXTENT: usize = 1;

    pub const STANDARD: SobelKernelPair = SobelKernelPair {
        x: [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]],
        y: [[-1, -2, -1], [0, 0, 0], [1, 2, 1]],
    };
}

/// How the gradient magnitude is mapped onto `[0, 255]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobelNormalization {
    /// Each plane's maximum maps to 255.
    #[default]
    PerPlane,
    /// The maximum over the whole stack maps to 255.
    Global,
}

/// Unnormalised gradient magnitude of one zero-padded plane.
///
/// Uses the separable factorisation of the stencils: a `[1, 2, 1]`
/// smoothing along one axis followed by a central difference along the
/// other.
pub fn sobel_magnitude<T: Scalar>(plane: &[T], height: usize, width: usize) -> Vec<T> {
    debug_assert_eq!(plane.len(), height * width);
    let two = T::of(2.0);
    let at = |y: isize, x: isize| -> T {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            T::zero()
        } else {
            plane[y as usize * width + x as usize]
        }
    };
    let mut vsmooth = vec![T::zero(); height * width];
    let mut hsmooth = vec![T::zero(); height * width];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            let c = at(y, x) * two;
            vsmooth[i] = at(y - 1, x) + c + at(y + 1, x);
            hsmooth[i] = at(y, x - 1) + c + at(y, x + 1);
        }
    }
    let pick = |buf: &[T], y: isize, x: isize| -> T {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            T::zero()
        } else {
            buf[y as usize * width + x as usize]
        }
    };
    let mut out = vec![T::zero(); height * width];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let gx = pick(&vsmooth, y, x + 1) - pick(&vsmooth, y, x - 1);
            let gy = pick(&hsmooth, y + 1, x) - pick(&hsmooth, y - 1, x);
            out[y as usize * width + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Applies the Sobel Event Frame to every plane of a binary or signed
/// stack; the result is a greyscale stack in `[0, 255]`.
pub fn sobel_frames<T: Scalar>(stack: &FrameStack<T>, normalization: SobelNormalization) -> Result<FrameStack<T>> {
    if !matches!(stack.value_range(), ValueRange::Binary01 | ValueRange::Signed1) {
        return Err(Error::invalid(
            "stack",
            format!("Sobel frames need binary or signed event frames, got {:?}", stack.value_range()),
        ));
    }
    let (h, w) = (stack.height(), stack.width());
    let mut data = Vec::with_capacity(stack.data().len());
    for p in 0..stack.planes() {
        data.extend(sobel_magnitude(stack.plane(p), h, w));
    }
    let full = T::of(255.0);
    let rescale = |chunk: &mut [T], max: T| {
        if max > T::zero() {
            // `max · 255 / max` can round one ulp above 255.
            for v in chunk.iter_mut() {
                *v = (*v * full / max).min(full);
            }
        }
    };
    match normalization {
        SobelNormalization::PerPlane => {
            for chunk in data.chunks_mut((h * w).max(1)) {
                let max = chunk.iter().copied().fold(T::zero(), T::max);
                rescale(chunk, max);
            }
        }
        SobelNormalization::Global => {
            let max = data.iter().copied().fold(T::zero(), T::max);
            rescale(&mut data, max);
        }
    }
    Ok(stack.with_data(ValueRange::Greyscale255, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::FrameMode;
    use proptest::prelude::*;

    /// Direct double loop over the stencil, straight from the correlation
    /// definition `Σ_w Σ_h E(x + w, y + h) · S(w, h)`.
    fn oracle(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
        let k = SobelKernelPair::STANDARD;
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut gx, mut gy) = (0.0, 0.0);
                for dh in -1..=1isize {
                    for dw in -1..=1isize {
                        let (yy, xx) = (y + dh, x + dw);
                        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                            continue;
                        }
                        let e = plane[yy as usize * w + xx as usize];
                        gx += e * f64::from(k.x[(dh + 1) as usize][(dw + 1) as usize]);
                        gy += e * f64::from(k.y[(dh + 1) as usize][(dw + 1) as usize]);
                    }
                }
                out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
        out
    }

    #[test]
    fn kernels_are_zero_sum_transposes() {
        let k = SobelKernelPair::STANDARD;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.y[i][j], k.x[j][i]);
            }
        }
        assert_eq!(k.x.iter().flatten().sum::<i32>(), 0);
        assert_eq!(k.y.iter().flatten().sum::<i32>(), 0);
    }

    #[test]
    fn impulse_response() {
        let mut plane = vec![0.0f64; 25];
        plane[12] = 1.0;
        let m = sobel_magnitude(&plane, 5, 5);
        assert_eq!(m[12], 0.0);
        for i in [7, 11, 13, 17] {
            assert_eq!(m[i], 2.0);
        }
        for i in [6, 8, 16, 18] {
            assert!((m[i] - 2f64.sqrt()).abs() < 1e-12);
        }
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn constant_plane_has_only_a_border_response() {
        let plane = vec![1.0f64; 36];
        let m = sobel_magnitude(&plane, 6, 6);
        for y in 0..6 {
            for x in 0..6 {
                let border = y == 0 || x == 0 || y == 5 || x == 5;
                assert_eq!(m[y * 6 + x] != 0.0, border, "({y},{x})");
            }
        }
    }

    #[test]
    fn normalization_modes() {
        let mut data = vec![0.0f64; 2 * 25];
        data[12] = 1.0;
        let stack = FrameStack::new(FrameMode::Pos, ValueRange::Binary01, 2, 5, 5, data).unwrap();
        let per = sobel_frames(&stack, SobelNormalization::PerPlane).unwrap();
        assert_eq!(per.value_range(), ValueRange::Greyscale255);
        assert_eq!(per.at(0, 1, 2), 255.0);
        assert!(per.plane(1).iter().all(|v| *v == 0.0));

        assert!(sobel_frames(&per, SobelNormalization::Global).is_err());
    }

    proptest! {
        #[test]
        fn matches_direct_correlation(bits in prop::collection::vec(-1i8..=1, 256)) {
            let plane: Vec<f64> = bits.iter().map(|b| f64::from(*b)).collect();
            prop_assert_eq!(sobel_magnitude(&plane, 16, 16), oracle(&plane, 16, 16));
        }
    }
}
