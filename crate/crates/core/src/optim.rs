//! Adam with bias correction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates for one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Real> Moments<F> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Gradients are
/// checked for finiteness before anything is modified.
pub fn adam_step<F: Real>(
    params: &mut [F],
    grads: &[F],
    state: &mut Moments<F>,
    cfg: &AdamConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam: step index starts at 1".into()));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            iteration: t,
            term: format!("gradient entry {i}"),
        });
    }
    let b1 = F::of(cfg.beta1);
    let b2 = F::of(cfg.beta2);
    let one = F::one();
    let c1 = one - b1.powi(t.min(i32::MAX as u64) as i32);
    let c2 = one - b2.powi(t.min(i32::MAX as u64) as i32);
    let lr = F::of(cfg.lr);
    let eps = F::of(cfg.eps);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *p -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}
