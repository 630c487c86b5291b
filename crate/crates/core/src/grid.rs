use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::real::Real;

/// Batch, channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `(n, c)` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

/// Dense NCHW array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<F> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Real> Grid<F> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![F::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape, v: F) -> Self {
        Self {
            shape,
            data: vec![v; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<F>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(shape_err(
                "grid",
                "length",
                alloc::format!("{:?} needs {} values, got {}", shape, shape.len(), data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> F) -> Self {
        Self {
            shape,
            data: (0..shape.len()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> F {
        self.data[self.shape.index(n, c, h, w)]
    }

    /// Reinterpret with a new shape of equal length. NCHW layout makes
    /// `(C, H, W) -> (C·H, 1, W)` free.
    pub fn reshaped(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Grid<G> {
        Grid {
            shape: self.shape,
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }
}
