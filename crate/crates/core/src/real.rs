//! Scalar abstraction shared by every kernel.
//!
//! Training runs in `f32`; gradient verification runs in `f64`. Everything
//! numeric in the crate is generic over [`Real`] so both paths execute the
//! same code.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Real:
    Float + Default + Debug + Display + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a·b + beta * c` on strided row-major views.
    ///
    /// `a` is `m×k`, `b` is `k×n`, `c` is `m×n`; strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(span(m, k, a_strides) <= a.len());
                debug_assert!(span(k, n, b_strides) <= b.len());
                debug_assert!(span(m, n, c_strides) <= c.len());
                if m <= SMALL_M && b_strides.1 == 1 {
                    small_m_gemm(m, k, n, alpha, a, a_strides, b, b_strides, beta, c, c_strides);
                    return;
                }
                if m <= SMALL_M && a_strides.1 == 1 && b_strides.0 == 1 {
                    small_m_dots(m, k, n, alpha, a, a_strides.0, b, b_strides.1, beta, c, c_strides);
                    return;
                }
                // SAFETY: the views described by (dims, strides) lie inside the
                // slices, checked by every caller through `span`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Row counts at or below this bypass the packed kernel, which is
/// inefficient for matrix-vector shapes.
const SMALL_M: usize = 4;

/// Plain loops for `m <= SMALL_M` with row-contiguous `b`.
#[allow(clippy::too_many_arguments)]
fn small_m_gemm<F: Float + AddAssign>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    a_strides: (isize, isize),
    b: &[F],
    b_strides: (isize, isize),
    beta: F,
    c: &mut [F],
    c_strides: (isize, isize),
) {
    let (ar, ac) = (a_strides.0 as usize, a_strides.1 as usize);
    let br = b_strides.0 as usize;
    let (cr, cc) = (c_strides.0 as usize, c_strides.1 as usize);
    for i in 0..m {
        let mut acc = alloc::vec![F::zero(); n];
        for kk in 0..k {
            let s = a[i * ar + kk * ac];
            for (o, &v) in acc.iter_mut().zip(&b[kk * br..kk * br + n]) {
                *o += s * v;
            }
        }
        for (j, &v) in acc.iter().enumerate() {
            let out = &mut c[i * cr + j * cc];
            *out = if beta == F::zero() { alpha * v } else { alpha * v + beta * *out };
        }
    }
}

/// `m <= SMALL_M` with rows of `a` and columns of `b` contiguous: one dot
/// product per output.
#[allow(clippy::too_many_arguments)]
fn small_m_dots<F: Float + AddAssign>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    a_row: isize,
    b: &[F],
    b_col: isize,
    beta: F,
    c: &mut [F],
    c_strides: (isize, isize),
) {
    let (cr, cc) = (c_strides.0 as usize, c_strides.1 as usize);
    for i in 0..m {
        let row = &a[i * a_row as usize..][..k];
        for j in 0..n {
            let v = dot(row, &b[j * b_col as usize..][..k]);
            let out = &mut c[i * cr + j * cc];
            *out = if beta == F::zero() { alpha * v } else { alpha * v + beta * *out };
        }
    }
}

/// Dot product with a fixed eight-lane summation order.
fn dot<F: Float + AddAssign>(x: &[F], y: &[F]) -> F {
    let mut lanes = [F::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            lanes[l] += a[l] * b[l];
        }
    }
    let mut tail = F::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    lanes.iter().fold(F::zero(), |s, &v| s + v) + tail
}

/// Number of elements a non-negative strided `rows×cols` view touches.
pub(crate) fn span(rows: usize, cols: usize, strides: (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * strides.0 as usize + (cols - 1) * strides.1 as usize + 1
}

#[inline]
pub fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}
