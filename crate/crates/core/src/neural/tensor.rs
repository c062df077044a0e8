use crate::error::{Error, Result};
use crate::representation::{FrameMode, FrameStack};
use crate::scalar::Scalar;

/// Dense `(channels, depth, height, width)` activation of one sample,
/// row-major with width fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "Tensor4::from_vec",
                detail: format!("{} values for shape {shape:?}", data.len()),
            });
        }
        Ok(Tensor4 { shape, data })
    }

    /// Network input view of a frame stack: one channel of `n` planes, or
    /// for Sep two channels (positive, negative) of `n` planes each.
    pub fn from_frames(stack: &FrameStack<T>) -> Self {
        let (h, w) = (stack.height(), stack.width());
        let hw = h * w;
        if stack.mode() == FrameMode::Sep {
            let n = stack.window_count();
            let mut data = Vec::with_capacity(2 * n * hw);
            for parity in 0..2 {
                for k in 0..n {
                    data.extend_from_slice(stack.plane(2 * k + parity));
                }
            }
            Tensor4 {
                shape: [2, n, h, w],
                data,
            }
        } else {
            Tensor4 {
                shape: [1, stack.planes(), h, w],
                data: stack.data().to_vec(),
            }
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Elements per channel.
    pub fn spatial(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let s = self.spatial();
        &self.data[c * s..(c + 1) * s]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let s = self.spatial();
        &mut self.data[c * s..(c + 1) * s]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::ShapeMismatch {
                context,
                detail: format!("non-finite value at index {i}"),
            }),
        }
    }
}

/// Debug-build guard against NaN/Inf crossing a layer boundary.
#[inline]
pub(crate) fn debug_check<T: Scalar>(xs: &[Tensor4<T>], context: &'static str) {
    if cfg!(debug_assertions) {
        for x in xs {
            if let Err(e) = x.check_finite(context) {
                panic!("{e}");
            }
        }
    }
}
