//! Finite-difference verification of the analytic gradients.
//!
//! Each case builds a small graph on a fresh `f64` tape, reduces its output
//! with fixed random weights `w` to `L = Σ w·out`, and compares `∂L/∂input`
//! from [`Tape::backward_seeded`] with central differences of `L`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};
use crate::ops::ConvGeom;
use crate::tape::{Tape, Var};

/// Builds the graph under test from its leaves and returns the output node.
pub type BuildFn = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Grid<f64>>,
    pub build: Box<BuildFn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub coords: usize,
}

impl GradReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn weighted_output(build: &BuildFn, inputs: &[Grid<f64>], weights: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|g| tape.constant(g.clone())).collect();
    let out = build(&mut tape, &vars)?;
    Ok(tape.value(out).data().iter().zip(weights).map(|(a, b)| a * b).sum())
}

/// Max relative error between analytic and central-difference gradients
/// over up to `samples` coordinates drawn from all inputs.
///
/// `corrupt` scales the analytic gradient by 1.05; it exists to check that
/// the harness notices a broken backward pass.
pub fn grad_check(
    build: &BuildFn,
    inputs: &[Grid<f64>],
    h: f64,
    samples: usize,
    seed: u64,
    corrupt: bool,
) -> Result<(f64, usize)> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "grad_check: step {h} outside [1e-6, 1e-3]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|g| tape.param(g.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let weights: Vec<f64> = (0..tape.shape(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.backward_seeded(out, weights.clone())?;

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (k, g) in inputs.iter().enumerate() {
        coords.extend((0..g.shape().len()).map(|i| (k, i)));
    }
    if coords.len() > samples {
        // partial Fisher-Yates
        for i in 0..samples {
            let j = rng.random_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(samples);
    }

    let mut worst = 0.0f64;
    let mut probe: Vec<Grid<f64>> = inputs.to_vec();
    for &(k, i) in &coords {
        let mut analytic = tape.grad(vars[k]).map_or(0.0, |g| g[i]);
        if corrupt {
            analytic *= 1.05;
        }
        let orig = probe[k].data()[i];
        probe[k].data_mut()[i] = orig + h;
        let up = weighted_output(build, &probe, &weights)?;
        probe[k].data_mut()[i] = orig - h;
        let down = weighted_output(build, &probe, &weights)?;
        probe[k].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic, numeric));
    }
    Ok((worst, coords.len()))
}

fn random_grid(rng: &mut ChaCha8Rng, shape: Shape, scale: f64) -> Grid<f64> {
    Grid::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// One case per tape operator, each exercising every differentiable input.
pub fn standard_suite(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    cases.push(GradCase {
        name: "conv2d",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(2, 2, 5, 6), 1.0),
            random_grid(&mut rng, Shape::new(3, 2, 3, 3), 0.5),
            random_grid(&mut rng, Shape::new(1, 3, 1, 1), 0.5),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| {
            let b = t.reshape(v[2], Shape::new(3, 1, 1, 1))?;
            t.conv2d(v[0], v[1], Some(b), ConvGeom::new((2, 1), (1, 1)))
        }),
    });
    cases.push(GradCase {
        name: "conv1d",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(1, 3, 1, 12), 1.0),
            random_grid(&mut rng, Shape::new(4, 3, 1, 5), 0.5),
            random_grid(&mut rng, Shape::new(4, 1, 1, 1), 0.5),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.conv1d(v[0], v[1], Some(v[2]), 2, 2)),
    });
    cases.push(GradCase {
        name: "glu",
        inputs: alloc::vec![random_grid(&mut rng, Shape::new(2, 4, 3, 3), 2.0)],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.glu(v[0])),
    });
    cases.push(GradCase {
        name: "instance_norm",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(2, 3, 4, 5), 2.0),
            random_grid(&mut rng, Shape::new(1, 3, 1, 1), 1.5),
            random_grid(&mut rng, Shape::new(1, 3, 1, 1), 1.0),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.instance_norm(v[0], v[1], v[2], 1e-5)),
    });
    cases.push(GradCase {
        name: "pixel_shuffle",
        inputs: alloc::vec![random_grid(&mut rng, Shape::new(1, 8, 2, 3), 1.0)],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.pixel_shuffle(v[0], 2)),
    });
    cases.push(GradCase {
        name: "pixel_shuffle_1d",
        inputs: alloc::vec![random_grid(&mut rng, Shape::new(1, 6, 1, 4), 1.0)],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.pixel_shuffle_1d(v[0], 2)),
    });
    cases.push(GradCase {
        name: "resize_rows",
        inputs: alloc::vec![random_grid(&mut rng, Shape::new(1, 2, 5, 3), 1.0)],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| {
            let padded = t.resize_rows(v[0], 8);
            let k = t.constant(Grid::from_fn(Shape::new(1, 2, 3, 1), |i| 0.3 * i as f64 - 0.4));
            let y = t.conv2d(padded, k, None, ConvGeom::new((1, 1), (1, 0)))?;
            Ok(t.resize_rows(y, 4))
        }),
    });
    cases.push(GradCase {
        name: "linear",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(2, 2, 2, 3), 1.0),
            random_grid(&mut rng, Shape::new(3, 12, 1, 1), 0.5),
            random_grid(&mut rng, Shape::new(1, 3, 1, 1), 0.5),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.linear(v[0], v[1], v[2])),
    });
    cases.push(GradCase {
        name: "add",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(1, 2, 3, 3), 1.0),
            random_grid(&mut rng, Shape::new(1, 2, 3, 3), 1.0),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| {
            let g = t.glu(v[1])?;
            let g = t.reshape(g, Shape::new(1, 1, 3, 3))?;
            let a = t.glu(v[0])?;
            let a = t.reshape(a, Shape::new(1, 1, 3, 3))?;
            t.add(a, g)
        }),
    });
    cases.push(GradCase {
        name: "mse_to",
        inputs: alloc::vec![random_grid(&mut rng, Shape::new(1, 1, 3, 4), 1.0)],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| t.mse_to(v[0], 1.0)),
    });
    cases.push(GradCase {
        name: "l1",
        inputs: alloc::vec![
            random_grid(&mut rng, Shape::new(1, 1, 3, 4), 1.0),
            random_grid(&mut rng, Shape::new(1, 1, 3, 4), 1.0),
        ],
        build: Box::new(|t: &mut Tape<f64>, v: &[Var]| {
            let a = t.l1(v[0], v[1])?;
            let b = t.mse_to(v[1], 0.0)?;
            t.weighted_sum(&[(a, 2.0), (b, -0.5)])
        }),
    });
    cases
}

/// Runs every case of [`standard_suite`]; `corrupt` names a case whose
/// analytic gradient is deliberately perturbed.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<GradReport>> {
    standard_suite(seed)
        .into_iter()
        .enumerate()
        .map(|(i, case)| {
            let broken = corrupt == Some(case.name);
            let (err, coords) = grad_check(&*case.build, &case.inputs, 1e-6, 200, seed ^ (i as u64 + 1), broken)?;
            Ok(GradReport {
                name: case.name.into(),
                max_rel_err: err,
                coords,
            })
        })
        .collect()
}
