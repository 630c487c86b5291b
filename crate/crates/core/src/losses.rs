//! Least-squares adversarial, cycle-consistency and identity objectives.
//!
//! Each term exists twice: a plain evaluator over values and a tape builder
//! used by training. Both feed [`total_objective`] / [`assemble_g`], so the
//! reported totals and the optimized totals are the same expression.

use alloc::format;
use alloc::vec::Vec;

// Float math for builds without std.
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::features::{to_grid, FeatureSequence};
use crate::models::Discriminator;
use crate::real::Real;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    /// 1 or 2.
    pub adv_steps: u8,
}

impl LossWeights {
    pub fn new(lambda_cyc: f64, lambda_id: f64, adv_steps: u8) -> Result<Self> {
        let w = Self {
            lambda_cyc,
            lambda_id,
            adv_steps,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cyc >= 0.0 && self.lambda_cyc.is_finite()) {
            return Err(Error::Config(format!("lambda_cyc must be >= 0, got {}", self.lambda_cyc)));
        }
        if !(self.lambda_id >= 0.0 && self.lambda_id.is_finite()) {
            return Err(Error::Config(format!("lambda_id must be >= 0, got {}", self.lambda_id)));
        }
        if !matches!(self.adv_steps, 1 | 2) {
            return Err(Error::Config(format!("adv_steps must be 1 or 2, got {}", self.adv_steps)));
        }
        Ok(())
    }
}

/// Per-iteration loss values. Terms that are inactive (second-step terms
/// with one adversarial step, identity after the cutoff) are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub adv_g: f64,
    pub adv_d: f64,
    pub adv2_g: f64,
    pub adv2_d: f64,
    pub cyc: f64,
    pub id: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    /// `(name, value)` in log column order, totals included.
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("adv_g", self.adv_g),
            ("adv_d", self.adv_d),
            ("adv2_g", self.adv2_g),
            ("adv2_d", self.adv2_d),
            ("cyc", self.cyc),
            ("id", self.id),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
        ]
    }

    /// First non-finite field, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.fields().iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

fn non_empty<F>(s: &[F], what: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty score grid")));
    }
    Ok(())
}

fn mean_sq_to<F: Real>(s: &[F], target: f64) -> f64 {
    s.iter().map(|v| { let e = v.as_f64() - target; e * e }).sum::<f64>() / s.len() as f64
}

/// `mean((real − 1)²) + mean(fake²)`.
pub fn lsgan_d_loss<F: Real>(real: &[F], fake: &[F]) -> Result<f64> {
    non_empty(real, "lsgan_d_loss real")?;
    non_empty(fake, "lsgan_d_loss fake")?;
    Ok(mean_sq_to(real, 1.0) + mean_sq_to(fake, 0.0))
}

/// `mean((fake − 1)²)`.
pub fn lsgan_g_loss<F: Real>(fake: &[F]) -> Result<f64> {
    non_empty(fake, "lsgan_g_loss")?;
    Ok(mean_sq_to(fake, 1.0))
}

fn mae(a: &FeatureSequence, b: &FeatureSequence, op: &'static str) -> Result<f64> {
    if a.q() != b.q() || a.t() != b.t() {
        return Err(Error::Shape {
            op,
            dim: if a.q() != b.q() { "dimension" } else { "frames" },
            detail: format!("{}x{} vs {}x{}", a.q(), a.t(), b.q(), b.t()),
        });
    }
    let n = a.values().len() as f64;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(&p, &q)| (p as f64 - q as f64).abs())
        .sum::<f64>()
        / n)
}

/// `mae(x, x_cyc) + mae(y, y_cyc)`.
pub fn cycle_loss(
    x: &FeatureSequence,
    x_cyc: &FeatureSequence,
    y: &FeatureSequence,
    y_cyc: &FeatureSequence,
) -> Result<f64> {
    Ok(mae(x, x_cyc, "cycle_loss")? + mae(y, y_cyc, "cycle_loss")?)
}

/// `mae(y, G_XY(y)) + mae(x, G_YX(x))`.
pub fn identity_loss(
    y: &FeatureSequence,
    g_xy_of_y: &FeatureSequence,
    x: &FeatureSequence,
    g_yx_of_x: &FeatureSequence,
) -> Result<f64> {
    Ok(mae(y, g_xy_of_y, "identity_loss")? + mae(x, g_yx_of_x, "identity_loss")?)
}

/// Least-squares terms of a second-step discriminator that sees `x` as real
/// and its reconstruction `x_cyc` as fake. Returns `(g_term, d_term)`.
pub fn second_adversarial_loss<F: Real>(
    x: &FeatureSequence,
    x_cyc: &FeatureSequence,
    d2: Option<&Discriminator<F>>,
) -> Result<(f64, f64)> {
    let d2 = d2.ok_or_else(|| {
        Error::Config("second adversarial loss needs second-step discriminators (adv_steps = 2)".into())
    })?;
    mae(x, x_cyc, "second_adversarial_loss")?;
    let real = d2.scores(x)?;
    let fake = d2.scores(x_cyc)?;
    Ok((lsgan_g_loss(&fake)?, lsgan_d_loss(&real, &fake)?))
}

/// `(total_g, total_d)` from the individual terms. Second-step terms count
/// only with two adversarial steps; the identity term only while
/// `id_active`.
pub fn total_objective(parts: &LossReport, w: &LossWeights, id_active: bool) -> (f64, f64) {
    let two = w.adv_steps == 2;
    let mut g = parts.adv_g;
    let mut d = parts.adv_d;
    if two {
        g += parts.adv2_g;
        d += parts.adv2_d;
    }
    g += w.lambda_cyc * parts.cyc;
    if id_active {
        g += w.lambda_id * parts.id;
    }
    (g, d)
}

/// Scalar nodes of the generator objective.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorTerms {
    pub adv: Var,
    pub adv2: Option<Var>,
    pub cyc: Var,
    pub id: Option<Var>,
}

/// Tape form of [`lsgan_d_loss`].
pub fn tape_lsgan_d<F: Real>(tape: &mut Tape<F>, real: Var, fake: Var) -> Result<Var> {
    let r = tape.mse_to(real, F::one())?;
    let f = tape.mse_to(fake, F::zero())?;
    tape.weighted_sum(&[(r, F::one()), (f, F::one())])
}

/// Tape form of [`lsgan_g_loss`].
pub fn tape_lsgan_g<F: Real>(tape: &mut Tape<F>, fake: Var) -> Result<Var> {
    tape.mse_to(fake, F::one())
}

/// Tape form of a sum of mean-absolute pairs, as in [`cycle_loss`] and
/// [`identity_loss`].
pub fn tape_l1_pairs<F: Real>(tape: &mut Tape<F>, pairs: &[(Var, Var)]) -> Result<Var> {
    let terms = pairs
        .iter()
        .map(|&(a, b)| Ok((tape.l1(a, b)?, F::one())))
        .collect::<Result<Vec<_>>>()?;
    tape.weighted_sum(&terms)
}

/// Tape form of `total_g` in [`total_objective`].
pub fn assemble_g<F: Real>(tape: &mut Tape<F>, t: &GeneratorTerms, w: &LossWeights) -> Result<Var> {
    let mut terms = alloc::vec![(t.adv, F::one()), (t.cyc, F::of(w.lambda_cyc))];
    if w.adv_steps == 2 {
        let adv2 = t
            .adv2
            .ok_or_else(|| Error::Config("adv_steps = 2 without second-step terms".into()))?;
        terms.push((adv2, F::one()));
    }
    if let Some(id) = t.id {
        terms.push((id, F::of(w.lambda_id)));
    }
    tape.weighted_sum(&terms)
}

/// Convenience: places sequences on a tape as one constant batch.
pub fn constant_batch<F: Real>(tape: &mut Tape<F>, batch: &[&FeatureSequence]) -> Result<Var> {
    Ok(tape.constant(to_grid(batch)?))
}
