//! Reverse-mode differentiation over the operators in [`crate::ops`].
//!
//! A [`Tape`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so walking them backwards is a valid topological order.
//! Gradients accumulate into per-node buffers that are only allocated for
//! nodes that lead to a leaf created with [`Tape::param`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, Shape};
use crate::ops::{self, ConvGeom, ConvGrads, NormCache};
use crate::real::Real;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Conv {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Glu(Var),
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache<F>,
        detach_stats: bool,
    },
    PixelShuffle {
        x: Var,
        r: usize,
        one_d: bool,
    },
    Reshape(Var),
    Add(Var, Var),
    ResizeRows {
        x: Var,
        rows: usize,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Var,
    },
    MseTo {
        x: Var,
        target: F,
    },
    L1(Var, Var),
    WeightedSum(Vec<(Var, F)>),
}

#[derive(Debug)]
struct Node<F> {
    value: Grid<F>,
    op: Op<F>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    detach_norm_stats: bool,
}

fn scalar<F: Real>(v: F) -> Grid<F> {
    Grid::full(Shape::new(1, 1, 1, 1), v)
}

/// Mutable gradient slot for `v` when it participates in differentiation.
fn slot<'a, F: Real>(
    grads: &'a mut [Option<Vec<F>>],
    nodes: &[Node<F>],
    v: Var,
) -> Option<&'a mut [F]> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let len = node.value.shape().len();
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); len]).as_mut_slice())
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            detach_norm_stats: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// When set, instance-norm nodes recorded afterwards treat their mean and
    /// variance as constants in the backward pass.
    pub fn set_detach_norm_stats(&mut self, detach: bool) {
        self.detach_norm_stats = detach;
    }

    fn push(&mut self, value: Grid<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf; receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: Grid<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Grid<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient only if `requires_grad`.
    pub fn leaf(&mut self, value: Grid<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Grid<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of the last [`Tape::backward`] root w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads[v.0].as_deref()
    }

    /// Scalar value of a `1×1×1×1` node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value.data()[0]
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let b = bias.map(|b| self.value(b).data());
        let value = ops::conv2d_forward(self.value(x), self.value(kernel), b, geom)?;
        let mut deps = vec![x, kernel];
        deps.extend(bias);
        let rg = self.needs(&deps);
        Ok(self.push(value, Op::Conv { x, kernel, bias, geom }, rg))
    }

    /// Convolution along the width of a height-1 grid; the channel axis
    /// carries the feature dimension.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        if self.shape(x).h != 1 {
            return Err(shape_err(
                "conv1d",
                "height",
                format!("input height must be 1, got {}", self.shape(x).h),
            ));
        }
        if self.shape(kernel).h != 1 {
            return Err(shape_err(
                "conv1d",
                "kernel height",
                format!("kernel height must be 1, got {}", self.shape(kernel).h),
            ));
        }
        self.conv2d(x, kernel, bias, ConvGeom::new((1, stride), (0, pad)))
    }

    pub fn glu(&mut self, x: Var) -> Result<Var> {
        let value = ops::glu_forward(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Glu(x), rg))
    }

    /// `gamma` and `beta` hold one entry per channel.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: F) -> Result<Var> {
        let (value, cache) =
            ops::instance_norm_forward(self.value(x), self.value(gamma).data(), self.value(beta).data(), eps)?;
        let rg = self.needs(&[x, gamma, beta]);
        let detach_stats = self.detach_norm_stats;
        Ok(self.push(
            value,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                cache,
                detach_stats,
            },
            rg,
        ))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let value = ops::pixel_shuffle_forward(self.value(x), r, false)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::PixelShuffle { x, r, one_d: false }, rg))
    }

    /// Channel-to-time shuffle for height-1 grids: `(C·r, 1, W) -> (C, 1, W·r)`.
    pub fn pixel_shuffle_1d(&mut self, x: Var, r: usize) -> Result<Var> {
        let value = ops::pixel_shuffle_forward(self.value(x), r, true)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::PixelShuffle { x, r, one_d: true }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "add",
                "shape",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut value = self.value(a).clone();
        for (d, &v) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *d += v;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Zero-pads (or crops) the height axis to `rows`.
    pub fn resize_rows(&mut self, x: Var, rows: usize) -> Var {
        let value = ops::resize_rows_forward(self.value(x), rows);
        let rg = self.needs(&[x]);
        self.push(value, Op::ResizeRows { x, rows }, rg)
    }

    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let value = ops::linear_forward(self.value(x), self.value(weight), self.value(bias).data())?;
        let rg = self.needs(&[x, weight, bias]);
        Ok(self.push(value, Op::Linear { x, weight, bias }, rg))
    }

    /// `mean((x − target)²)` as a scalar node.
    pub fn mse_to(&mut self, x: Var, target: F) -> Result<Var> {
        let data = self.value(x).data();
        if data.is_empty() {
            return Err(Error::InvalidArgument("mse_to: empty input".into()));
        }
        let n = F::of(data.len() as f64);
        let v = data.iter().map(|&s| (s - target) * (s - target)).sum::<F>() / n;
        let rg = self.needs(&[x]);
        Ok(self.push(scalar(v), Op::MseTo { x, target }, rg))
    }

    /// `mean(|a − b|)` as a scalar node.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "l1",
                "shape",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if da.is_empty() {
            return Err(Error::InvalidArgument("l1: empty input".into()));
        }
        let n = F::of(da.len() as f64);
        let v = da.iter().zip(db).map(|(&p, &q)| (p - q).abs()).sum::<F>() / n;
        let rg = self.needs(&[a, b]);
        Ok(self.push(scalar(v), Op::L1(a, b), rg))
    }

    /// `Σ wᵢ·vᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, F)]) -> Result<Var> {
        let mut v = F::zero();
        for &(t, w) in terms {
            if self.shape(t).len() != 1 {
                return Err(shape_err(
                    "weighted_sum",
                    "length",
                    format!("term is not a scalar: {:?}", self.shape(t)),
                ));
            }
            v += w * self.scalar(t);
        }
        let deps: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.needs(&deps);
        Ok(self.push(scalar(v), Op::WeightedSum(terms.to_vec()), rg))
    }

    /// Back-propagates from a scalar root, replacing any gradients left by a
    /// previous call.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root).len() != 1 {
            return Err(shape_err(
                "backward",
                "root",
                format!("root must be scalar, got {:?}", self.shape(root)),
            ));
        }
        self.backward_seeded(root, vec![F::one()])
    }

    /// Back-propagates an explicit output gradient from a node of any shape.
    pub fn backward_seeded(&mut self, root: Var, seed: Vec<F>) -> Result<()> {
        if seed.len() != self.shape(root).len() {
            return Err(shape_err(
                "backward",
                "seed",
                format!("seed has {} entries for {:?}", seed.len(), self.shape(root)),
            ));
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, gout: &[F]) {
        let Self { nodes, grads, .. } = self;
        let nodes: &[Node<F>] = nodes;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv { x, kernel, bias, geom } => {
                let mut gx = take(grads, nodes, *x);
                let mut gk = take(grads, nodes, *kernel);
                let mut gb = bias.and_then(|b| take(grads, nodes, b));
                ops::conv2d_backward(
                    &nodes[x.0].value,
                    &nodes[kernel.0].value,
                    *geom,
                    gout,
                    ConvGrads {
                        x: gx.as_deref_mut(),
                        kernel: gk.as_deref_mut(),
                        bias: gb.as_deref_mut(),
                    },
                );
                store(grads, *x, gx);
                store(grads, *kernel, gk);
                if let Some(b) = bias {
                    store(grads, *b, gb);
                }
            }
            Op::Glu(x) => {
                if let Some(gx) = slot(grads, nodes, *x) {
                    ops::glu_backward(&nodes[x.0].value, gout, gx);
                }
            }
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                cache,
                detach_stats,
            } => {
                let mut gx = take(grads, nodes, *x);
                let mut gg = take(grads, nodes, *gamma);
                let mut gb = take(grads, nodes, *beta);
                ops::instance_norm_backward(
                    nodes[x.0].value.shape(),
                    nodes[gamma.0].value.data(),
                    cache,
                    gout,
                    *detach_stats,
                    gx.as_deref_mut(),
                    gg.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                store(grads, *x, gx);
                store(grads, *gamma, gg);
                store(grads, *beta, gb);
            }
            Op::PixelShuffle { x, r, one_d } => {
                let xs = nodes[x.0].value.shape();
                if let Some(gx) = slot(grads, nodes, *x) {
                    ops::pixel_shuffle_backward(xs, *r, *one_d, gout, gx);
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(grads, nodes, *x) {
                    for (d, &g) in gx.iter_mut().zip(gout) {
                        *d += g;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = slot(grads, nodes, v) {
                        for (d, &g) in gv.iter_mut().zip(gout) {
                            *d += g;
                        }
                    }
                }
            }
            Op::ResizeRows { x, rows } => {
                let xs = nodes[x.0].value.shape();
                if let Some(gx) = slot(grads, nodes, *x) {
                    ops::resize_rows_backward(xs, *rows, gout, gx);
                }
            }
            Op::Linear { x, weight, bias } => {
                let mut gx = take(grads, nodes, *x);
                let mut gw = take(grads, nodes, *weight);
                let mut gb = take(grads, nodes, *bias);
                ops::linear_backward(
                    &nodes[x.0].value,
                    &nodes[weight.0].value,
                    gout,
                    ConvGrads {
                        x: gx.as_deref_mut(),
                        kernel: gw.as_deref_mut(),
                        bias: gb.as_deref_mut(),
                    },
                );
                store(grads, *x, gx);
                store(grads, *weight, gw);
                store(grads, *bias, gb);
            }
            Op::MseTo { x, target } => {
                let xv = nodes[x.0].value.data();
                let scale = F::of(2.0) * gout[0] / F::of(xv.len() as f64);
                if let Some(gx) = slot(grads, nodes, *x) {
                    for (d, &v) in gx.iter_mut().zip(xv) {
                        *d += scale * (v - *target);
                    }
                }
            }
            Op::L1(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let scale = gout[0] / F::of(av.len() as f64);
                let sign = |d: F| {
                    if d > F::zero() {
                        scale
                    } else if d < F::zero() {
                        -scale
                    } else {
                        F::zero()
                    }
                };
                if let Some(ga) = slot(grads, nodes, *a) {
                    for ((d, &p), &q) in ga.iter_mut().zip(av).zip(bv) {
                        *d += sign(p - q);
                    }
                }
                if let Some(gb) = slot(grads, nodes, *b) {
                    for ((d, &p), &q) in gb.iter_mut().zip(av).zip(bv) {
                        *d -= sign(p - q);
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for &(t, w) in terms {
                    if let Some(gt) = slot(grads, nodes, t) {
                        gt[0] += w * gout[0];
                    }
                }
            }
        }
    }
}

/// Moves `v`'s gradient buffer out of the table (allocating it if needed) so
/// several inputs of one node can be written at once. Inputs of a node are
/// distinct tape entries.
fn take<F: Real>(grads: &mut [Option<Vec<F>>], nodes: &[Node<F>], v: Var) -> Option<Vec<F>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(
        grads[v.0]
            .take()
            .unwrap_or_else(|| vec![F::zero(); node.value.shape().len()]),
    )
}

fn store<F>(grads: &mut [Option<Vec<F>>], v: Var, g: Option<Vec<F>>) {
    if let Some(g) = g {
        grads[v.0] = Some(g);
    }
}
