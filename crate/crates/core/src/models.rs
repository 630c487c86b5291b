//! Generator and discriminator networks.
//!
//! Each architecture is written once against the [`Builder`] trait. Running
//! it with a [`ShapeBuilder`] declares the parameters and infers shapes;
//! running it with a [`TapeBuilder`] records the forward pass on a tape.
//!
//! Layer tables (widths are the channel counts after gating, before the
//! width divisor is applied):
//!
//! | generator 2-1-2D | kernel | stride | width |
//! |------------------|--------|--------|-------|
//! | input conv + GLU | 5×15   | 1      | 128   |
//! | down 2D, IN, GLU | 5×5    | 2      | 256   |
//! | down 2D, IN, GLU | 5×5    | 2      | 256   |
//! | reshape, 1×1 conv, IN | 1×1 | 1   | 256   |
//! | 6 × residual 1D  | 1×3    | 1      | 512 / 256 |
//! | 1×1 conv, IN, reshape | 1×1 | 1   | 256·H/4 |
//! | up 2D, PS, IN, GLU | 5×5  | 1      | 256   |
//! | up 2D, PS, IN, GLU | 5×5  | 1      | 128   |
//! | output conv      | 5×15   | 1      | 1     |
//!
//! | discriminator    | kernel | stride | width |
//! |------------------|--------|--------|-------|
//! | input conv + GLU | 3×3    | 1      | 128   |
//! | down, IN, GLU    | 3×3    | 2      | 256   |
//! | down, IN, GLU    | 3×3    | 2      | 512   |
//! | down, IN, GLU    | 6×3    | 1×2    | 1024  |
//! | patch: conv      | 1×3    | 1      | 1     |
//! | full: dense      | –      | –      | 1     |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

// Float math for builds without std.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{from_grid, to_grid, FeatureSequence};
use crate::grid::{Grid, Shape};
use crate::ops::{self, ConvGeom};
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Epsilon of every instance normalization layer.
pub const NORM_EPS: f64 = 1e-5;

/// Smallest frequency-axis height the discriminator's 6-row kernel fits
/// after two stride-2 stages.
const DISC_MIN_ROWS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    /// Downsampling, residual and upsampling all 1D; features on channels.
    OneD,
    /// Fully 2D.
    TwoD,
    /// 2D down/upsampling around a 1D residual core.
    TwoOneTwoD,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1d" => Ok(Self::OneD),
            "2d" => Ok(Self::TwoD),
            "2-1-2d" => Ok(Self::TwoOneTwoD),
            other => Err(Error::Config(format!(
                "unknown generator kind '{other}' (expected 1d, 2d or 2-1-2d)"
            ))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OneD => "1d",
            Self::TwoD => "2d",
            Self::TwoOneTwoD => "2-1-2d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscriminatorKind {
    /// Dense last layer, one score per input.
    Full,
    /// Convolutional last layer, one score per patch.
    Patch,
}

impl FromStr for DiscriminatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "patch" => Ok(Self::Patch),
            other => Err(Error::Config(format!(
                "unknown discriminator kind '{other}' (expected full or patch)"
            ))),
        }
    }
}

impl fmt::Display for DiscriminatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Patch => "patch",
        })
    }
}

fn scaled(width: usize, divisor: usize) -> usize {
    (width / divisor.max(1)).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Feature dimension `Q`.
    pub q: usize,
    /// Every channel width is divided by this (1 = full size).
    pub channel_divisor: usize,
    pub residual_blocks: usize,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, q: usize) -> Self {
        Self {
            kind,
            q,
            channel_divisor: 1,
            residual_blocks: 6,
        }
    }

    /// Widths of (input, down1, down2, residual inner, bottleneck, up1, up2).
    fn widths(&self) -> [usize; 7] {
        let full = match self.kind {
            GeneratorKind::TwoOneTwoD | GeneratorKind::TwoD => [128, 256, 256, 512, 256, 256, 128],
            GeneratorKind::OneD => [128, 256, 512, 1024, 512, 512, 256],
        };
        full.map(|w| scaled(w, self.channel_divisor))
    }

    /// Input length is admissible iff divisible by 4 and at least 16.
    pub fn check_frames(t: usize) -> Result<()> {
        let padded = t.max(16).div_ceil(4) * 4;
        if t < 16 {
            return Err(Error::Length {
                got: t,
                padded,
                reason: "generator needs at least 16 frames",
            });
        }
        if t % 4 != 0 {
            return Err(Error::Length {
                got: t,
                padded,
                reason: "generator needs a multiple of 4 frames (two stride-2 stages)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscriminatorSpec {
    pub kind: DiscriminatorKind,
    pub q: usize,
    /// Input length; fixes the dense layer size of `Full`.
    pub frames: usize,
    pub channel_divisor: usize,
}

impl DiscriminatorSpec {
    pub fn new(kind: DiscriminatorKind, q: usize, frames: usize) -> Self {
        Self {
            kind,
            q,
            frames,
            channel_divisor: 1,
        }
    }

    fn widths(&self) -> [usize; 4] {
        [128, 256, 512, 1024].map(|w| scaled(w, self.channel_divisor))
    }
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

/// Named parameter arrays in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    names: Vec<String>,
    values: Vec<Grid<F>>,
}

impl<F: Real> ParamSet<F> {
    pub fn new(names: Vec<String>, values: Vec<Grid<F>>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} arrays",
                names.len(),
                values.len()
            )));
        }
        Ok(Self { names, values })
    }

    fn init(decls: &[ParamDecl], rng: &mut ChaCha8Rng) -> Self {
        let mut names = Vec::with_capacity(decls.len());
        let mut values = Vec::with_capacity(decls.len());
        for d in decls {
            let grid = match d.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    Grid::from_fn(d.shape, |_| F::of(rng.random_range(-bound..bound)))
                }
                Init::Zeros => Grid::zeros(d.shape),
                Init::Ones => Grid::full(d.shape, F::one()),
            };
            names.push(d.name.clone());
            values.push(grid);
        }
        Self { names, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Grid<F>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Grid<F>] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Grid<F>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(|g| g.shape().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Grid::is_finite)
    }

    /// Places every array on `tape`, trainable or not.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> Vec<Var> {
        self.values.iter().map(|g| tape.leaf(g.clone(), trainable)).collect()
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_layout<G: Real>(&self, other: &ParamSet<G>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Config("parameter names differ".into()));
        }
        for ((n, a), b) in self.names.iter().zip(&self.values).zip(&other.values) {
            if a.shape() != b.shape() {
                return Err(Error::Config(format!(
                    "parameter {n}: shape {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Operations an architecture description is written against.
pub trait Builder {
    type Node: Copy;

    fn shape(&self, x: Self::Node) -> Shape;
    /// Convolution whose input channel count is taken from `x`.
    fn conv(
        &mut self,
        name: &str,
        x: Self::Node,
        out: usize,
        kernel: (usize, usize),
        geom: ConvGeom,
        bias: bool,
    ) -> Result<Self::Node>;
    fn norm(&mut self, name: &str, x: Self::Node) -> Result<Self::Node>;
    fn glu(&mut self, x: Self::Node) -> Result<Self::Node>;
    fn shuffle(&mut self, x: Self::Node, r: usize, one_d: bool) -> Result<Self::Node>;
    fn reshape(&mut self, x: Self::Node, shape: Shape) -> Result<Self::Node>;
    fn add(&mut self, a: Self::Node, b: Self::Node) -> Result<Self::Node>;
    fn resize_rows(&mut self, x: Self::Node, rows: usize) -> Result<Self::Node>;
    fn dense(&mut self, name: &str, x: Self::Node, out: usize) -> Result<Self::Node>;
}

/// Declares parameters and propagates shapes without computing anything.
#[derive(Debug, Default)]
pub struct ShapeBuilder {
    shapes: Vec<Shape>,
    pub decls: Vec<ParamDecl>,
}

impl ShapeBuilder {
    pub fn input(&mut self, shape: Shape) -> usize {
        self.shapes.push(shape);
        self.shapes.len() - 1
    }

    fn node(&mut self, shape: Shape) -> usize {
        self.input(shape)
    }

    fn declare(&mut self, name: String, shape: Shape, init: Init) {
        self.decls.push(ParamDecl { name, shape, init });
    }
}

impl Builder for ShapeBuilder {
    type Node = usize;

    fn shape(&self, x: usize) -> Shape {
        self.shapes[x]
    }

    fn conv(
        &mut self,
        name: &str,
        x: usize,
        out: usize,
        kernel: (usize, usize),
        geom: ConvGeom,
        bias: bool,
    ) -> Result<usize> {
        let xs = self.shapes[x];
        let ks = Shape::new(out, xs.c, kernel.0, kernel.1);
        let os = ops::conv_out_shape(xs, ks, geom)?;
        self.declare(format!("{name}.w"), ks, Init::FanIn(xs.c * kernel.0 * kernel.1));
        if bias {
            self.declare(format!("{name}.b"), Shape::new(1, out, 1, 1), Init::Zeros);
        }
        Ok(self.node(os))
    }

    fn norm(&mut self, name: &str, x: usize) -> Result<usize> {
        let c = self.shapes[x].c;
        self.declare(format!("{name}.gamma"), Shape::new(1, c, 1, 1), Init::Ones);
        self.declare(format!("{name}.beta"), Shape::new(1, c, 1, 1), Init::Zeros);
        Ok(self.node(self.shapes[x]))
    }

    fn glu(&mut self, x: usize) -> Result<usize> {
        let s = self.shapes[x];
        if s.c % 2 != 0 {
            return Err(Error::InvalidArgument(format!("glu on {} channels", s.c)));
        }
        Ok(self.node(Shape::new(s.n, s.c / 2, s.h, s.w)))
    }

    fn shuffle(&mut self, x: usize, r: usize, one_d: bool) -> Result<usize> {
        let s = self.shapes[x];
        let rh = if one_d { 1 } else { r };
        let f = r * rh;
        if s.c % f != 0 {
            return Err(Error::InvalidArgument(format!("shuffle of {} channels by {f}", s.c)));
        }
        Ok(self.node(Shape::new(s.n, s.c / f, s.h * rh, s.w * r)))
    }

    fn reshape(&mut self, x: usize, shape: Shape) -> Result<usize> {
        if self.shapes[x].len() != shape.len() {
            return Err(Error::InvalidArgument(format!(
                "reshape {:?} -> {:?}",
                self.shapes[x], shape
            )));
        }
        Ok(self.node(shape))
    }

    fn add(&mut self, a: usize, b: usize) -> Result<usize> {
        if self.shapes[a] != self.shapes[b] {
            return Err(Error::InvalidArgument(format!(
                "add {:?} + {:?}",
                self.shapes[a], self.shapes[b]
            )));
        }
        Ok(self.node(self.shapes[a]))
    }

    fn resize_rows(&mut self, x: usize, rows: usize) -> Result<usize> {
        let s = self.shapes[x];
        Ok(self.node(Shape::new(s.n, s.c, rows, s.w)))
    }

    fn dense(&mut self, name: &str, x: usize, out: usize) -> Result<usize> {
        let s = self.shapes[x];
        let feat = s.c * s.h * s.w;
        self.declare(format!("{name}.w"), Shape::new(out, feat, 1, 1), Init::FanIn(feat));
        self.declare(format!("{name}.b"), Shape::new(1, out, 1, 1), Init::Zeros);
        Ok(self.node(Shape::new(s.n, out, 1, 1)))
    }
}

/// Records the forward pass on a tape, consuming bound parameters in
/// declaration order.
pub struct TapeBuilder<'a, F: Real> {
    pub tape: &'a mut Tape<F>,
    params: &'a [Var],
    cursor: usize,
}

impl<'a, F: Real> TapeBuilder<'a, F> {
    pub fn new(tape: &'a mut Tape<F>, params: &'a [Var]) -> Self {
        Self {
            tape,
            params,
            cursor: 0,
        }
    }

    fn next(&mut self) -> Result<Var> {
        let v = self
            .params
            .get(self.cursor)
            .copied()
            .ok_or_else(|| Error::InvalidArgument("network ran out of bound parameters".into()))?;
        self.cursor += 1;
        Ok(v)
    }

    fn finish(&self) -> Result<()> {
        if self.cursor != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "network used {} of {} bound parameters",
                self.cursor,
                self.params.len()
            )));
        }
        Ok(())
    }
}

impl<F: Real> Builder for TapeBuilder<'_, F> {
    type Node = Var;

    fn shape(&self, x: Var) -> Shape {
        self.tape.shape(x)
    }

    fn conv(
        &mut self,
        _name: &str,
        x: Var,
        _out: usize,
        _kernel: (usize, usize),
        geom: ConvGeom,
        bias: bool,
    ) -> Result<Var> {
        let w = self.next()?;
        let b = if bias { Some(self.next()?) } else { None };
        self.tape.conv2d(x, w, b, geom)
    }

    fn norm(&mut self, _name: &str, x: Var) -> Result<Var> {
        let g = self.next()?;
        let b = self.next()?;
        self.tape.instance_norm(x, g, b, F::of(NORM_EPS))
    }

    fn glu(&mut self, x: Var) -> Result<Var> {
        self.tape.glu(x)
    }

    fn shuffle(&mut self, x: Var, r: usize, one_d: bool) -> Result<Var> {
        if one_d {
            self.tape.pixel_shuffle_1d(x, r)
        } else {
            self.tape.pixel_shuffle(x, r)
        }
    }

    fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        self.tape.reshape(x, shape)
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.tape.add(a, b)
    }

    fn resize_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        Ok(self.tape.resize_rows(x, rows))
    }

    fn dense(&mut self, _name: &str, x: Var, _out: usize) -> Result<Var> {
        let w = self.next()?;
        let b = self.next()?;
        self.tape.linear(x, w, b)
    }
}

fn gated<B: Builder>(
    b: &mut B,
    name: &str,
    x: B::Node,
    width: usize,
    kernel: (usize, usize),
    geom: ConvGeom,
) -> Result<B::Node> {
    let h = b.conv(name, x, 2 * width, kernel, geom, false)?;
    let h = b.norm(&format!("{name}.in"), h)?;
    b.glu(h)
}

/// Upsampling block: conv, pixel shuffle, IN, GLU.
fn up_block<B: Builder>(
    b: &mut B,
    name: &str,
    x: B::Node,
    width: usize,
    kernel: (usize, usize),
    one_d: bool,
) -> Result<B::Node> {
    let factor = if one_d { 2 } else { 4 };
    let h = b.conv(name, x, 2 * width * factor, kernel, ConvGeom::same(kernel.0, kernel.1), false)?;
    let h = b.shuffle(h, 2, one_d)?;
    let h = b.norm(&format!("{name}.in"), h)?;
    b.glu(h)
}

fn residual<B: Builder>(
    b: &mut B,
    name: &str,
    x: B::Node,
    inner: usize,
    kernel: (usize, usize),
) -> Result<B::Node> {
    let channels = b.shape(x).c;
    let geom = ConvGeom::same(kernel.0, kernel.1);
    let h = gated(b, &format!("{name}.a"), x, inner, kernel, geom)?;
    let h = b.conv(&format!("{name}.b"), h, channels, kernel, geom, false)?;
    let h = b.norm(&format!("{name}.b.in"), h)?;
    b.add(x, h)
}

/// Generator forward on an `(N, 1, Q, T)` input; returns the same shape.
pub fn generator_graph<B: Builder>(spec: &GeneratorSpec, b: &mut B, x: B::Node) -> Result<B::Node> {
    let s = b.shape(x);
    if s.c != 1 || s.h != spec.q {
        return Err(Error::Shape {
            op: "generator",
            dim: "dimension",
            detail: format!("expected (N, 1, {}, T) input, got {:?}", spec.q, s),
        });
    }
    GeneratorSpec::check_frames(s.w)?;
    let [w_in, w_d1, w_d2, w_res, w_neck, w_u1, w_u2] = spec.widths();
    match spec.kind {
        GeneratorKind::OneD => {
            let h = b.reshape(x, Shape::new(s.n, spec.q, 1, s.w))?;
            let h = b.conv("in", h, 2 * w_in, (1, 15), ConvGeom::new((1, 1), (0, 7)), true)?;
            let h = b.glu(h)?;
            let down = ConvGeom::new((1, 2), (0, 2));
            let h = gated(b, "down1", h, w_d1, (1, 5), down)?;
            let mut h = gated(b, "down2", h, w_d2, (1, 5), down)?;
            for i in 0..spec.residual_blocks {
                h = residual(b, &format!("res{i}"), h, w_res, (1, 3))?;
            }
            let h = up_block(b, "up1", h, w_u1, (1, 5), true)?;
            let h = up_block(b, "up2", h, w_u2, (1, 5), true)?;
            let h = b.conv("out", h, spec.q, (1, 15), ConvGeom::new((1, 1), (0, 7)), true)?;
            b.reshape(h, Shape::new(s.n, 1, spec.q, s.w))
        }
        GeneratorKind::TwoD | GeneratorKind::TwoOneTwoD => {
            let rows = spec.q.div_ceil(4) * 4;
            let h = b.resize_rows(x, rows)?;
            let h = b.conv("in", h, 2 * w_in, (5, 15), ConvGeom::same(5, 15), true)?;
            let h = b.glu(h)?;
            let down = ConvGeom::new((2, 2), (2, 2));
            let h = gated(b, "down1", h, w_d1, (5, 5), down)?;
            let mut h = gated(b, "down2", h, w_d2, (5, 5), down)?;
            let ds = b.shape(h);
            if spec.kind == GeneratorKind::TwoOneTwoD {
                let flat = ds.c * ds.h;
                h = b.reshape(h, Shape::new(ds.n, flat, 1, ds.w))?;
                h = b.conv("to1d", h, w_neck, (1, 1), ConvGeom::same(1, 1), false)?;
                h = b.norm("to1d.in", h)?;
                for i in 0..spec.residual_blocks {
                    h = residual(b, &format!("res{i}"), h, w_res, (1, 3))?;
                }
                h = b.conv("to2d", h, flat, (1, 1), ConvGeom::same(1, 1), false)?;
                h = b.norm("to2d.in", h)?;
                h = b.reshape(h, ds)?;
            } else {
                for i in 0..spec.residual_blocks {
                    h = residual(b, &format!("res{i}"), h, w_res, (3, 3))?;
                }
            }
            let h = up_block(b, "up1", h, w_u1, (5, 5), false)?;
            let h = up_block(b, "up2", h, w_u2, (5, 5), false)?;
            let h = b.conv("out", h, 1, (5, 15), ConvGeom::same(5, 15), true)?;
            b.resize_rows(h, spec.q)
        }
    }
}

/// Discriminator forward on an `(N, 1, Q, T)` input; returns raw scores,
/// `(N, 1, P, W)` patches or `(N, 1, 1, 1)` for the dense head.
pub fn discriminator_graph<B: Builder>(spec: &DiscriminatorSpec, b: &mut B, x: B::Node) -> Result<B::Node> {
    let s = b.shape(x);
    if s.c != 1 || s.h != spec.q {
        return Err(Error::Shape {
            op: "discriminator",
            dim: "dimension",
            detail: format!("expected (N, 1, {}, T) input, got {:?}", spec.q, s),
        });
    }
    if spec.kind == DiscriminatorKind::Full && s.w != spec.frames {
        return Err(Error::Shape {
            op: "discriminator",
            dim: "frames",
            detail: format!("dense head was built for {} frames, got {}", spec.frames, s.w),
        });
    }
    let [w0, w1, w2, w3] = spec.widths();
    let h = b.resize_rows(x, spec.q.max(DISC_MIN_ROWS))?;
    let h = b.conv("in", h, 2 * w0, (3, 3), ConvGeom::same(3, 3), true)?;
    let h = b.glu(h)?;
    let h = gated(b, "down1", h, w1, (3, 3), ConvGeom::new((2, 2), (1, 1)))?;
    let h = gated(b, "down2", h, w2, (3, 3), ConvGeom::new((2, 2), (1, 1)))?;
    let h = gated(b, "down3", h, w3, (6, 3), ConvGeom::new((1, 2), (0, 1)))?;
    match spec.kind {
        DiscriminatorKind::Patch => b.conv("out", h, 1, (1, 3), ConvGeom::same(1, 3), true),
        DiscriminatorKind::Full => b.dense("out", h, 1),
    }
}

fn net_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<F> {
    pub spec: GeneratorSpec,
    pub params: ParamSet<F>,
}

impl<F: Real> Generator<F> {
    pub fn declare(spec: &GeneratorSpec) -> Result<Vec<ParamDecl>> {
        if spec.q == 0 {
            return Err(Error::InvalidArgument("generator needs q > 0".into()));
        }
        let mut sb = ShapeBuilder::default();
        let x = sb.input(Shape::new(1, 1, spec.q, 16));
        let y = generator_graph(spec, &mut sb, x)?;
        debug_assert_eq!(sb.shape(y), Shape::new(1, 1, spec.q, 16));
        Ok(sb.decls)
    }

    pub fn build(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        let decls = Self::declare(&spec)?;
        let params = ParamSet::init(&decls, &mut net_rng(seed));
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: GeneratorSpec, params: ParamSet<F>) -> Result<Self> {
        let decls = Self::declare(&spec)?;
        check_decls(&decls, &params)?;
        Ok(Self { spec, params })
    }

    /// Records the forward pass of `x` on `tape` using already bound
    /// parameter nodes.
    pub fn forward(&self, tape: &mut Tape<F>, params: &[Var], x: Var) -> Result<Var> {
        let mut b = TapeBuilder::new(tape, params);
        let y = generator_graph(&self.spec, &mut b, x)?;
        b.finish()?;
        Ok(y)
    }

    /// Evaluates on one sequence; `T` must be admissible.
    pub fn apply(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let input = tape.constant(to_grid(&[x])?);
        let y = self.forward(&mut tape, &vars, input)?;
        Ok(from_grid(tape.value(y))?.remove(0))
    }

    /// Evaluates on a sequence of any length: reflection-pads to the next
    /// admissible length and trims the result.
    pub fn apply_any_length(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let padded_len = x.t().max(16).div_ceil(4) * 4;
        let y = self.apply(&x.reflect_pad(padded_len))?;
        y.slice_frames(0, x.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<F> {
    pub spec: DiscriminatorSpec,
    pub params: ParamSet<F>,
}

impl<F: Real> Discriminator<F> {
    pub fn declare(spec: &DiscriminatorSpec) -> Result<Vec<ParamDecl>> {
        if spec.q == 0 || spec.frames == 0 {
            return Err(Error::InvalidArgument("discriminator needs q > 0 and frames > 0".into()));
        }
        let mut sb = ShapeBuilder::default();
        let x = sb.input(Shape::new(1, 1, spec.q, spec.frames));
        discriminator_graph(spec, &mut sb, x)?;
        Ok(sb.decls)
    }

    pub fn build(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        let decls = Self::declare(&spec)?;
        let params = ParamSet::init(&decls, &mut net_rng(seed));
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: DiscriminatorSpec, params: ParamSet<F>) -> Result<Self> {
        let decls = Self::declare(&spec)?;
        check_decls(&decls, &params)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, tape: &mut Tape<F>, params: &[Var], x: Var) -> Result<Var> {
        let mut b = TapeBuilder::new(tape, params);
        let y = discriminator_graph(&self.spec, &mut b, x)?;
        b.finish()?;
        Ok(y)
    }

    /// Raw scores for one sequence.
    pub fn scores(&self, x: &FeatureSequence) -> Result<Vec<F>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let input = tape.constant(to_grid(&[x])?);
        let y = self.forward(&mut tape, &vars, input)?;
        Ok(tape.value(y).data().to_vec())
    }
}

fn check_decls<F: Real>(decls: &[ParamDecl], params: &ParamSet<F>) -> Result<()> {
    if decls.len() != params.len() {
        return Err(Error::Config(format!(
            "architecture declares {} parameter arrays, got {}",
            decls.len(),
            params.len()
        )));
    }
    for (d, (name, g)) in decls.iter().zip(params.iter()) {
        if d.name != name || d.shape != g.shape() {
            return Err(Error::Config(format!(
                "parameter {} {:?} does not match {} {:?}",
                name,
                g.shape(),
                d.name,
                d.shape
            )));
        }
    }
    Ok(())
}

/// All networks of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet<F> {
    pub g_xy: Generator<F>,
    pub g_yx: Generator<F>,
    pub d_x: Discriminator<F>,
    pub d_y: Discriminator<F>,
    /// Second-step discriminators, present iff two-step adversarial losses
    /// are used.
    pub d2_x: Option<Discriminator<F>>,
    pub d2_y: Option<Discriminator<F>>,
}

/// Network slot names, in the order used for seeding and serialization.
pub const NETWORK_NAMES: [&str; 6] = ["g_xy", "g_yx", "d_x", "d_y", "d2_x", "d2_y"];

impl<F: Real> ModelSet<F> {
    pub fn build(g: GeneratorSpec, d: DiscriminatorSpec, two_step: bool, seed: u64) -> Result<Self> {
        let sub = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i + 1);
        Ok(Self {
            g_xy: Generator::build(g, sub(0))?,
            g_yx: Generator::build(g, sub(1))?,
            d_x: Discriminator::build(d, sub(2))?,
            d_y: Discriminator::build(d, sub(3))?,
            d2_x: if two_step { Some(Discriminator::build(d, sub(4))?) } else { None },
            d2_y: if two_step { Some(Discriminator::build(d, sub(5))?) } else { None },
        })
    }

    /// `(name, params)` for every network present.
    pub fn networks(&self) -> Vec<(&'static str, &ParamSet<F>)> {
        let mut out = alloc::vec![
            (NETWORK_NAMES[0], &self.g_xy.params),
            (NETWORK_NAMES[1], &self.g_yx.params),
            (NETWORK_NAMES[2], &self.d_x.params),
            (NETWORK_NAMES[3], &self.d_y.params),
        ];
        if let Some(d) = &self.d2_x {
            out.push((NETWORK_NAMES[4], &d.params));
        }
        if let Some(d) = &self.d2_y {
            out.push((NETWORK_NAMES[5], &d.params));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.networks().iter().all(|(_, p)| p.is_finite())
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (name, p) in self.networks() {
            s.push_str(name);
            s.push('=');
            s.push_str(&p.count().to_string());
            s.push(' ');
        }
        s
    }
}
