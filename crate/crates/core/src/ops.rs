//! Forward and backward kernels for the operators the networks need.
//!
//! Kernels are plain functions over [`Grid`]s and slices; the tape in
//! [`crate::tape`] records which kernel produced which node and replays the
//! backward kernels in reverse. Reductions run in a fixed order, so equal
//! inputs always give bit-identical outputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, Shape};
use crate::real::{sigmoid, Real};

/// Stride and zero padding of a convolution, as `(height, width)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvGeom {
    pub const fn new(stride: (usize, usize), pad: (usize, usize)) -> Self {
        Self { stride, pad }
    }

    /// Stride 1 with "same" padding for an odd kernel.
    pub const fn same(kh: usize, kw: usize) -> Self {
        Self {
            stride: (1, 1),
            pad: (kh / 2, kw / 2),
        }
    }
}

/// `floor((len + 2·pad − k) / stride) + 1`, or `None` when the padded input
/// is shorter than the kernel.
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if k == 0 || stride == 0 || len + 2 * pad < k {
        return None;
    }
    Some((len + 2 * pad - k) / stride + 1)
}

/// Output shape of a convolution of `x` with a kernel shaped
/// `(out, in, kh, kw)`.
pub fn conv_out_shape(x: Shape, kernel: Shape, geom: ConvGeom) -> Result<Shape> {
    if kernel.c != x.c {
        return Err(shape_err(
            "conv",
            "channels",
            format!("input has {} channels, kernel expects {}", x.c, kernel.c),
        ));
    }
    if geom.stride.0 == 0 || geom.stride.1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv: stride must be >= 1, got {:?}",
            geom.stride
        )));
    }
    let ho = conv_out_len(x.h, kernel.h, geom.stride.0, geom.pad.0).ok_or_else(|| {
        shape_err(
            "conv",
            "height",
            format!(
                "padded height {} is smaller than kernel height {}",
                x.h + 2 * geom.pad.0,
                kernel.h
            ),
        )
    })?;
    let wo = conv_out_len(x.w, kernel.w, geom.stride.1, geom.pad.1).ok_or_else(|| {
        shape_err(
            "conv",
            "width",
            format!(
                "padded width {} is smaller than kernel width {}",
                x.w + 2 * geom.pad.1,
                kernel.w
            ),
        )
    })?;
    Ok(Shape::new(x.n, kernel.n, ho, wo))
}

fn is_pointwise(kernel: Shape, geom: ConvGeom) -> bool {
    kernel.h == 1 && kernel.w == 1 && geom.stride == (1, 1) && geom.pad == (0, 0)
}

/// Output columns `ow` whose input column `ow·stride + kj − pad` lies in
/// `0..w`, as a half-open range.
fn valid_cols(out_w: usize, w: usize, stride: usize, kj: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).div_ceil(stride).min(out_w);
    // Largest ow with ow·stride + kj − pad ≤ w − 1.
    let hi = if w + pad > kj {
        ((w + pad - kj - 1) / stride + 1).min(out_w)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Unfolds batch item `n` of `x` into a `(C·kh·kw) × (Ho·Wo)` matrix,
/// replacing the contents of `cols`.
fn im2col<F: Real>(x: &Grid<F>, n: usize, kernel: Shape, geom: ConvGeom, out: Shape, cols: &mut Vec<F>) {
    let xs = x.shape();
    let xd = x.data();
    let (sh, sw) = geom.stride;
    let (ph, pw) = (geom.pad.0 as isize, geom.pad.1);
    let zero = F::zero();
    cols.clear();
    cols.reserve(xs.c * kernel.h * kernel.w * out.h * out.w);
    for c in 0..xs.c {
        let plane = &xd[xs.index(n, c, 0, 0)..xs.index(n, c, 0, 0) + xs.plane()];
        for ki in 0..kernel.h {
            for kj in 0..kernel.w {
                let (lo, hi) = valid_cols(out.w, xs.w, sw, kj, pw);
                for oh in 0..out.h {
                    let ih = (oh * sh) as isize + ki as isize - ph;
                    if ih < 0 || ih >= xs.h as isize || lo >= hi {
                        cols.extend(core::iter::repeat_n(zero, out.w));
                        continue;
                    }
                    let src = &plane[ih as usize * xs.w..(ih as usize + 1) * xs.w];
                    let first = lo * sw + kj - pw;
                    cols.extend(core::iter::repeat_n(zero, lo));
                    if sw == 1 {
                        cols.extend_from_slice(&src[first..first + hi - lo]);
                    } else {
                        cols.extend(src[first..].iter().step_by(sw).take(hi - lo).copied());
                    }
                    cols.extend(core::iter::repeat_n(zero, out.w - hi));
                }
            }
        }
    }
}

/// Folds a column matrix back onto batch item `n` of a gradient buffer,
/// accumulating overlapping taps.
fn col2im<F: Real>(cols: &[F], xs: Shape, n: usize, kernel: Shape, geom: ConvGeom, out: Shape, gx: &mut [F]) {
    let p = out.h * out.w;
    let (sh, sw) = geom.stride;
    let (ph, pw) = (geom.pad.0 as isize, geom.pad.1);
    let mut row = 0;
    for c in 0..xs.c {
        let base = xs.index(n, c, 0, 0);
        for ki in 0..kernel.h {
            for kj in 0..kernel.w {
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(out.w, xs.w, sw, kj, pw);
                row += 1;
                if lo >= hi {
                    continue;
                }
                let first = lo * sw + kj - pw;
                for oh in 0..out.h {
                    let ih = (oh * sh) as isize + ki as isize - ph;
                    if ih < 0 || ih >= xs.h as isize {
                        continue;
                    }
                    let line = &src[oh * out.w + lo..oh * out.w + hi];
                    let dst = &mut gx[base + ih as usize * xs.w..base + (ih as usize + 1) * xs.w];
                    for (d, &g) in dst[first..].iter_mut().step_by(sw).zip(line) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// 2D cross-correlation with zero padding. `kernel` is `(out, in, kh, kw)`.
pub fn conv2d_forward<F: Real>(
    x: &Grid<F>,
    kernel: &Grid<F>,
    bias: Option<&[F]>,
    geom: ConvGeom,
) -> Result<Grid<F>> {
    let ks = kernel.shape();
    let os = conv_out_shape(x.shape(), ks, geom)?;
    if let Some(b) = bias {
        if b.len() != ks.n {
            return Err(shape_err(
                "conv",
                "bias",
                format!("bias has {} entries for {} output channels", b.len(), ks.n),
            ));
        }
    }
    let xs = x.shape();
    let kk = ks.c * ks.h * ks.w;
    let p = os.h * os.w;
    let mut out = Grid::zeros(os);
    let pointwise = is_pointwise(ks, geom);
    let mut cols = Vec::new();
    for n in 0..xs.n {
        let rhs: &[F] = if pointwise {
            &x.data()[xs.index(n, 0, 0, 0)..xs.index(n, 0, 0, 0) + kk * p]
        } else {
            im2col(x, n, ks, geom, os, &mut cols);
            &cols
        };
        let dst = &mut out.data_mut()[os.index(n, 0, 0, 0)..os.index(n, 0, 0, 0) + ks.n * p];
        F::gemm(
            ks.n,
            kk,
            p,
            F::one(),
            kernel.data(),
            (kk as isize, 1),
            rhs,
            (p as isize, 1),
            F::zero(),
            dst,
            (p as isize, 1),
        );
        if let Some(b) = bias {
            for (o, &bo) in b.iter().enumerate() {
                for v in &mut dst[o * p..(o + 1) * p] {
                    *v += bo;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient buffers a convolution backward pass should fill. `None` skips
/// the corresponding computation.
pub struct ConvGrads<'a, F> {
    pub x: Option<&'a mut [F]>,
    pub kernel: Option<&'a mut [F]>,
    pub bias: Option<&'a mut [F]>,
}

/// Accumulates gradients of a [`conv2d_forward`] call given the output
/// gradient `gout`.
pub fn conv2d_backward<F: Real>(x: &Grid<F>, kernel: &Grid<F>, geom: ConvGeom, gout: &[F], grads: ConvGrads<'_, F>) {
    let xs = x.shape();
    let ks = kernel.shape();
    let os = conv_out_shape(xs, ks, geom).expect("shape checked in forward");
    let kk = ks.c * ks.h * ks.w;
    let p = os.h * os.w;
    let pointwise = is_pointwise(ks, geom);
    let ConvGrads {
        x: mut gx,
        kernel: mut gk,
        bias: mut gb,
    } = grads;
    let mut cols = Vec::new();
    let transposed = (!pointwise && gx.is_some()).then(|| transposed_kernel(ks, geom, kernel)).flatten();
    for n in 0..xs.n {
        let go = &gout[os.index(n, 0, 0, 0)..os.index(n, 0, 0, 0) + ks.n * p];
        if let Some(gb) = gb.as_deref_mut() {
            for (o, slot) in gb.iter_mut().enumerate() {
                *slot += go[o * p..(o + 1) * p].iter().copied().sum::<F>();
            }
        }
        if let Some(gk) = gk.as_deref_mut() {
            let rhs: &[F] = if pointwise {
                &x.data()[xs.index(n, 0, 0, 0)..xs.index(n, 0, 0, 0) + kk * p]
            } else {
                im2col(x, n, ks, geom, os, &mut cols);
                &cols
            };
            // gk (O×K) += gout (O×P) · colsᵀ (P×K)
            F::gemm(
                ks.n,
                p,
                kk,
                F::one(),
                go,
                (p as isize, 1),
                rhs,
                (1, p as isize),
                F::one(),
                gk,
                (kk as isize, 1),
            );
        }
        if let Some(gx) = gx.as_deref_mut() {
            if pointwise {
                let dst = &mut gx[xs.index(n, 0, 0, 0)..xs.index(n, 0, 0, 0) + kk * p];
                F::gemm(
                    kk,
                    ks.n,
                    p,
                    F::one(),
                    kernel.data(),
                    (1, kk as isize),
                    go,
                    (p as isize, 1),
                    F::one(),
                    dst,
                    (p as isize, 1),
                );
            } else if let Some((kt, tgeom)) = &transposed {
                let g = Grid::from_vec(Shape::new(1, ks.n, os.h, os.w), go.to_vec()).expect("sized above");
                let back = conv2d_forward(&g, kt, None, *tgeom).expect("shapes match the forward");
                let dst = &mut gx[xs.index(n, 0, 0, 0)..xs.index(n + 1, 0, 0, 0)];
                for (d, &v) in dst.iter_mut().zip(back.data()) {
                    *d += v;
                }
            } else {
                // cols (K×P) = kernelᵀ (K×O) · gout (O×P)
                cols.resize(kk * p, F::zero());
                F::gemm(
                    kk,
                    ks.n,
                    p,
                    F::one(),
                    kernel.data(),
                    (1, kk as isize),
                    go,
                    (p as isize, 1),
                    F::zero(),
                    &mut cols,
                    (p as isize, 1),
                );
                col2im(&cols, xs, n, ks, geom, os, gx);
            }
        }
    }
}

/// For stride-1 convolutions with fewer output than input channels, the
/// input gradient is itself a convolution of the output gradient with the
/// flipped, channel-transposed kernel, over a smaller unrolled buffer.
fn transposed_kernel<F: Real>(ks: Shape, geom: ConvGeom, kernel: &Grid<F>) -> Option<(Grid<F>, ConvGeom)> {
    if geom.stride != (1, 1) || ks.n >= ks.c || geom.pad.0 >= ks.h || geom.pad.1 >= ks.w {
        return None;
    }
    let ts = Shape::new(ks.c, ks.n, ks.h, ks.w);
    let k = kernel.data();
    let kt = Grid::from_fn(ts, |idx| {
        let j = idx % ks.w;
        let i = (idx / ks.w) % ks.h;
        let o = (idx / (ks.w * ks.h)) % ks.n;
        let c = idx / (ks.w * ks.h * ks.n);
        k[ks.index(o, c, ks.h - 1 - i, ks.w - 1 - j)]
    });
    Some((kt, ConvGeom::new((1, 1), (ks.h - 1 - geom.pad.0, ks.w - 1 - geom.pad.1))))
}

/// Gated linear unit over the channel axis: first half ⊙ σ(second half).
pub fn glu_forward<F: Real>(x: &Grid<F>) -> Result<Grid<F>> {
    let s = x.shape();
    if s.c % 2 != 0 {
        return Err(shape_err("glu", "channels", format!("channel count {} is odd", s.c)));
    }
    let half = s.c / 2;
    let os = Shape::new(s.n, half, s.h, s.w);
    let plane = s.plane();
    let mut out = Grid::zeros(os);
    let xd = x.data();
    for n in 0..s.n {
        for c in 0..half {
            let a = &xd[s.index(n, c, 0, 0)..][..plane];
            let b = &xd[s.index(n, c + half, 0, 0)..][..plane];
            let dst = &mut out.data_mut()[os.index(n, c, 0, 0)..][..plane];
            for ((o, &av), &bv) in dst.iter_mut().zip(a).zip(b) {
                *o = av * sigmoid(bv);
            }
        }
    }
    Ok(out)
}

pub fn glu_backward<F: Real>(x: &Grid<F>, gout: &[F], gx: &mut [F]) {
    let s = x.shape();
    let half = s.c / 2;
    let os = Shape::new(s.n, half, s.h, s.w);
    let plane = s.plane();
    let xd = x.data();
    for n in 0..s.n {
        for c in 0..half {
            let ia = s.index(n, c, 0, 0);
            let ib = s.index(n, c + half, 0, 0);
            let go = &gout[os.index(n, c, 0, 0)..][..plane];
            for (i, &g) in go.iter().enumerate() {
                let a = xd[ia + i];
                let sb = sigmoid(xd[ib + i]);
                gx[ia + i] += g * sb;
                gx[ib + i] += g * a * sb * (F::one() - sb);
            }
        }
    }
}

/// Values saved by instance normalization for its backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<F> {
    /// Normalized input, same layout as the input.
    pub xhat: Vec<F>,
    /// `1/sqrt(var + eps)` per `(n, c)`.
    pub inv_std: Vec<F>,
}

/// Per-(batch, channel) normalization over the spatial positions, followed
/// by a per-channel affine map.
pub fn instance_norm_forward<F: Real>(
    x: &Grid<F>,
    gamma: &[F],
    beta: &[F],
    eps: F,
) -> Result<(Grid<F>, NormCache<F>)> {
    let s = x.shape();
    if gamma.len() != s.c || beta.len() != s.c {
        return Err(shape_err(
            "instance_norm",
            "channels",
            format!(
                "gamma/beta have {}/{} entries for {} channels",
                gamma.len(),
                beta.len(),
                s.c
            ),
        ));
    }
    if !(eps > F::zero()) {
        return Err(Error::InvalidArgument(format!("instance_norm: eps must be > 0, got {eps}")));
    }
    let plane = s.plane();
    let count = F::of(plane as f64);
    let mut out = Grid::zeros(s);
    let mut xhat = vec![F::zero(); s.len()];
    let mut inv_std = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        for c in 0..s.c {
            let base = s.index(n, c, 0, 0);
            let src = &x.data()[base..base + plane];
            let mean = src.iter().copied().sum::<F>() / count;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / count;
            let is = F::one() / (var + eps).sqrt();
            inv_std.push(is);
            let dst = &mut out.data_mut()[base..base + plane];
            let xh = &mut xhat[base..base + plane];
            for ((o, h), &v) in dst.iter_mut().zip(xh.iter_mut()).zip(src) {
                *h = (v - mean) * is;
                *o = gamma[c] * *h + beta[c];
            }
        }
    }
    Ok((out, NormCache { xhat, inv_std }))
}

/// Backward of [`instance_norm_forward`]. With `detach_stats` the mean and
/// variance are treated as constants, which confines each output's
/// dependence to its own input position.
#[allow(clippy::too_many_arguments)]
pub fn instance_norm_backward<F: Real>(
    shape: Shape,
    gamma: &[F],
    cache: &NormCache<F>,
    gout: &[F],
    detach_stats: bool,
    gx: Option<&mut [F]>,
    ggamma: Option<&mut [F]>,
    gbeta: Option<&mut [F]>,
) {
    let plane = shape.plane();
    let count = F::of(plane as f64);
    let mut gx = gx;
    let mut ggamma = ggamma;
    let mut gbeta = gbeta;
    for n in 0..shape.n {
        for c in 0..shape.c {
            let base = shape.index(n, c, 0, 0);
            let go = &gout[base..base + plane];
            let xh = &cache.xhat[base..base + plane];
            let sum_g = go.iter().copied().sum::<F>();
            let sum_gx = go.iter().zip(xh).map(|(&g, &h)| g * h).sum::<F>();
            if let Some(gg) = ggamma.as_deref_mut() {
                gg[c] += sum_gx;
            }
            if let Some(gb) = gbeta.as_deref_mut() {
                gb[c] += sum_g;
            }
            if let Some(gx) = gx.as_deref_mut() {
                let scale = gamma[c] * cache.inv_std[n * shape.c + c];
                let dst = &mut gx[base..base + plane];
                if detach_stats {
                    for (d, &g) in dst.iter_mut().zip(go) {
                        *d += scale * g;
                    }
                } else {
                    let mg = sum_g / count;
                    let mgx = sum_gx / count;
                    for ((d, &g), &h) in dst.iter_mut().zip(go).zip(xh) {
                        *d += scale * (g - mg - h * mgx);
                    }
                }
            }
        }
    }
}

/// Source index for each output position of a pixel shuffle.
///
/// 2D: `(C·r², H, W) -> (C, H·r, W·r)` with
/// `out[c, h·r+i, w·r+j] = in[c·r²+i·r+j, h, w]`.
/// 1D (`height == 1`, rows untouched): `(C·r, 1, W) -> (C, 1, W·r)` with
/// `out[c, 0, w·r+j] = in[c·r+j, 0, w]`.
fn shuffle_map(s: Shape, r: usize, one_d: bool) -> Result<(Shape, Vec<usize>)> {
    let (rh, factor) = if one_d { (1, r) } else { (r, r * r) };
    if r == 0 {
        return Err(Error::InvalidArgument("pixel_shuffle: factor must be >= 1".into()));
    }
    if one_d && s.h != 1 {
        return Err(shape_err("pixel_shuffle_1d", "height", format!("expected height 1, got {}", s.h)));
    }
    if s.c % factor != 0 {
        return Err(shape_err(
            "pixel_shuffle",
            "channels",
            format!("{} channels not divisible by {}", s.c, factor),
        ));
    }
    let os = Shape::new(s.n, s.c / factor, s.h * rh, s.w * r);
    let mut map = Vec::with_capacity(os.len());
    for n in 0..os.n {
        for c in 0..os.c {
            for oh in 0..os.h {
                for ow in 0..os.w {
                    let (h, i) = (oh / rh, oh % rh);
                    let (w, j) = (ow / r, ow % r);
                    let ic = c * factor + i * r + j;
                    map.push(s.index(n, ic, h, w));
                }
            }
        }
    }
    Ok((os, map))
}

pub fn pixel_shuffle_forward<F: Real>(x: &Grid<F>, r: usize, one_d: bool) -> Result<Grid<F>> {
    let (os, map) = shuffle_map(x.shape(), r, one_d)?;
    let xd = x.data();
    Ok(Grid::from_fn(os, |i| xd[map[i]]))
}

pub fn pixel_shuffle_backward<F: Real>(xs: Shape, r: usize, one_d: bool, gout: &[F], gx: &mut [F]) {
    let (_, map) = shuffle_map(xs, r, one_d).expect("shape checked in forward");
    for (&src, &g) in map.iter().zip(gout) {
        gx[src] += g;
    }
}

/// Inverse of the 2D pixel shuffle: `(C, H·r, W·r) -> (C·r², H, W)`.
pub fn pixel_unshuffle<F: Real>(y: &Grid<F>, r: usize) -> Result<Grid<F>> {
    let s = y.shape();
    if r == 0 || s.h % r != 0 || s.w % r != 0 {
        return Err(shape_err(
            "pixel_unshuffle",
            "spatial",
            format!("{}x{} not divisible by {}", s.h, s.w, r),
        ));
    }
    let xs = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let (_, map) = shuffle_map(xs, r, false)?;
    let mut out = Grid::zeros(xs);
    for (i, &src) in map.iter().enumerate() {
        out.data_mut()[src] = y.data()[i];
    }
    Ok(out)
}

/// Copies `x` into a grid with `rows` rows: extra rows are zero, surplus
/// rows are dropped.
pub fn resize_rows_forward<F: Real>(x: &Grid<F>, rows: usize) -> Grid<F> {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, rows, s.w);
    let mut out = Grid::zeros(os);
    let keep = rows.min(s.h);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = &x.data()[s.index(n, c, 0, 0)..][..keep * s.w];
            out.data_mut()[os.index(n, c, 0, 0)..][..keep * s.w].copy_from_slice(src);
        }
    }
    out
}

pub fn resize_rows_backward<F: Real>(xs: Shape, rows: usize, gout: &[F], gx: &mut [F]) {
    let os = Shape::new(xs.n, xs.c, rows, xs.w);
    let keep = rows.min(xs.h);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = &gout[os.index(n, c, 0, 0)..][..keep * xs.w];
            let dst = &mut gx[xs.index(n, c, 0, 0)..][..keep * xs.w];
            for (d, &g) in dst.iter_mut().zip(src) {
                *d += g;
            }
        }
    }
}

/// Fully connected layer on the flattened `C·H·W` features of each batch
/// item. `weight` is `(out, in, 1, 1)`; output is `(N, out, 1, 1)`.
pub fn linear_forward<F: Real>(x: &Grid<F>, weight: &Grid<F>, bias: &[F]) -> Result<Grid<F>> {
    let s = x.shape();
    let ws = weight.shape();
    let feat = s.c * s.h * s.w;
    if ws.c * ws.h * ws.w != feat {
        return Err(shape_err(
            "linear",
            "features",
            format!("input has {} features per item, weight expects {}", feat, ws.c * ws.h * ws.w),
        ));
    }
    if bias.len() != ws.n {
        return Err(shape_err("linear", "bias", format!("{} entries for {} outputs", bias.len(), ws.n)));
    }
    let os = Shape::new(s.n, ws.n, 1, 1);
    let mut out = Grid::zeros(os);
    for n in 0..s.n {
        let xi = &x.data()[n * feat..(n + 1) * feat];
        for o in 0..ws.n {
            let wr = &weight.data()[o * feat..(o + 1) * feat];
            let dot: F = wr.iter().zip(xi).map(|(&a, &b)| a * b).sum();
            out.data_mut()[n * ws.n + o] = dot + bias[o];
        }
    }
    Ok(out)
}

pub fn linear_backward<F: Real>(x: &Grid<F>, weight: &Grid<F>, gout: &[F], grads: ConvGrads<'_, F>) {
    let s = x.shape();
    let ws = weight.shape();
    let feat = s.c * s.h * s.w;
    let ConvGrads {
        x: mut gx,
        kernel: mut gw,
        bias: mut gb,
    } = grads;
    for n in 0..s.n {
        let xi = &x.data()[n * feat..(n + 1) * feat];
        for o in 0..ws.n {
            let g = gout[n * ws.n + o];
            if let Some(gb) = gb.as_deref_mut() {
                gb[o] += g;
            }
            if let Some(gw) = gw.as_deref_mut() {
                for (d, &v) in gw[o * feat..(o + 1) * feat].iter_mut().zip(xi) {
                    *d += g * v;
                }
            }
            if let Some(gx) = gx.as_deref_mut() {
                let wr = &weight.data()[o * feat..(o + 1) * feat];
                for (d, &w) in gx[n * feat..(n + 1) * feat].iter_mut().zip(wr) {
                    *d += g * w;
                }
            }
        }
    }
}
