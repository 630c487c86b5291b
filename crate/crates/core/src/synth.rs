//! Synthetic two-speaker corpus with a known conversion map.
//!
//! Shared "content" trajectories are sums of random-phase sinusoids whose
//! frequency band and amplitude depend on the dimension, lightly smoothed.
//! A speaker is an invertible transform of content: a 3-tap temporal filter
//! `[a, 1, b]`, an orthogonal mixing across dimensions built from small
//! Givens rotations, a per-dimension scale and an offset. Training sets of
//! the two speakers are drawn from disjoint content, so they are unpaired;
//! evaluation targets apply the target speaker to the source's content.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Float math for builds without std.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// How one pseudo-speaker's transform is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerParams {
    /// Taps before and after the unit centre tap.
    pub fir: (f64, f64),
    /// Largest absolute Givens angle in radians.
    pub max_angle: f64,
    pub scale_range: (f64, f64),
    pub offset_range: (f64, f64),
}

impl SpeakerParams {
    pub fn validate(&self, who: &str) -> Result<()> {
        let (a, b) = self.fir;
        if !(a.is_finite() && b.is_finite()) || a.abs() + b.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "speaker {who}: filter taps ({a}, {b}) must satisfy |a| + |b| < 1 for the filter to be invertible"
            )));
        }
        if !(self.max_angle.is_finite() && self.max_angle >= 0.0) {
            return Err(Error::Config(format!("speaker {who}: max_angle must be >= 0")));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "speaker {who}: scale range ({lo}, {hi}) must be positive and ordered"
            )));
        }
        let (lo, hi) = self.offset_range;
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return Err(Error::Config(format!("speaker {who}: offset range must be ordered")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
    pub q: usize,
    pub t_range: (usize, usize),
    pub speaker_a: SpeakerParams,
    pub speaker_b: SpeakerParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 40,
            n_eval: 10,
            q: 20,
            t_range: (140, 180),
            speaker_a: SpeakerParams {
                fir: (0.25, 0.15),
                max_angle: 0.05,
                scale_range: (0.5, 2.0),
                offset_range: (-1.0, 1.0),
            },
            speaker_b: SpeakerParams {
                fir: (-0.2, 0.3),
                max_angle: 0.05,
                scale_range: (0.5, 2.0),
                offset_range: (-1.0, 1.0),
            },
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Config(format!("q must be >= 2, got {}", self.q)));
        }
        if self.n_train == 0 || self.n_eval == 0 {
            return Err(Error::Config("n_train and n_eval must be >= 1".into()));
        }
        let (lo, hi) = self.t_range;
        if lo < 2 || hi < lo {
            return Err(Error::Config(format!("t_range ({lo}, {hi}) must satisfy 2 <= min <= max")));
        }
        self.speaker_a.validate("a")?;
        self.speaker_b.validate("b")
    }
}

/// A drawn speaker transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTransform {
    pub fir: (f64, f64),
    /// Givens rotations `(i, j, angle)`, applied in order.
    pub rotations: Vec<(usize, usize, f64)>,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl SpeakerTransform {
    pub fn draw(p: &SpeakerParams, q: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut rotations = Vec::new();
        for i in 0..q {
            for j in i + 1..q {
                let angle = if p.max_angle > 0.0 {
                    rng.random_range(-p.max_angle..=p.max_angle)
                } else {
                    0.0
                };
                rotations.push((i, j, angle));
            }
        }
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let scale = (0..q).map(|_| uniform(rng, p.scale_range)).collect();
        let offset = (0..q).map(|_| uniform(rng, p.offset_range)).collect();
        Self {
            fir: p.fir,
            rotations,
            scale,
            offset,
        }
    }

    pub fn q(&self) -> usize {
        self.scale.len()
    }

    fn rotate(&self, frame: &mut [f64], inverse: bool) {
        let mut apply = |&(i, j, a): &(usize, usize, f64)| {
            let a = if inverse { -a } else { a };
            let (c, s) = (a.cos(), a.sin());
            let (u, v) = (frame[i], frame[j]);
            frame[i] = c * u - s * v;
            frame[j] = s * u + c * v;
        };
        if inverse {
            self.rotations.iter().rev().for_each(&mut apply);
        } else {
            self.rotations.iter().for_each(&mut apply);
        }
    }

    /// Content (`Q` rows of length `T`, `f64`) to features.
    pub fn apply(&self, content: &[Vec<f64>]) -> Result<FeatureSequence> {
        let q = self.q();
        let t = content.first().map_or(0, Vec::len);
        let filtered: Vec<Vec<f64>> = content.iter().map(|row| fir(row, self.fir)).collect();
        let mut out = vec![0f32; q * t];
        let mut frame = vec![0.0; q];
        for i in 0..t {
            for d in 0..q {
                frame[d] = filtered[d][i];
            }
            self.rotate(&mut frame, false);
            for d in 0..q {
                out[d * t + i] = (self.scale[d] * frame[d] + self.offset[d]) as f32;
            }
        }
        FeatureSequence::new(q, t, out)
    }

    /// Inverse of [`SpeakerTransform::apply`].
    pub fn invert(&self, x: &FeatureSequence) -> Result<Vec<Vec<f64>>> {
        let q = self.q();
        if x.q() != q {
            return Err(Error::InvalidArgument(format!(
                "transform has {q} dimensions, features have {}",
                x.q()
            )));
        }
        let t = x.t();
        let mut mixed = vec![vec![0.0; t]; q];
        let mut frame = vec![0.0; q];
        for i in 0..t {
            for d in 0..q {
                frame[d] = (x.get(d, i) as f64 - self.offset[d]) / self.scale[d];
            }
            self.rotate(&mut frame, true);
            for d in 0..q {
                mixed[d][i] = frame[d];
            }
        }
        Ok(mixed.iter().map(|row| solve_fir(row, self.fir)).collect())
    }
}

/// `y[i] = a·x[i−1] + x[i] + b·x[i+1]` with zeros beyond the ends.
fn fir(x: &[f64], (a, b): (f64, f64)) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { x[i - 1] } else { 0.0 };
            let next = if i + 1 < n { x[i + 1] } else { 0.0 };
            a * prev + x[i] + b * next
        })
        .collect()
}

/// Solves the tridiagonal system of [`fir`] (Thomas algorithm; the matrix is
/// strictly diagonally dominant).
fn solve_fir(y: &[f64], (a, b): (f64, f64)) -> Vec<f64> {
    let n = y.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let lower = if i > 0 { a } else { 0.0 };
        let denom = 1.0 - lower * if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = b / denom;
        d[i] = (y[i] - lower * if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = d[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
    }
    x
}

/// Sinusoids per dimension in the content model.
const PARTIALS: usize = 4;

/// One content draw: `Q` rows of `t` frames.
pub fn draw_content(q: usize, t: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..q)
        .map(|d| {
            // Lower dimensions are slower and larger, as in real cepstra.
            let rel = d as f64 / q.max(2).saturating_sub(1) as f64;
            let f_lo = 0.015 + 0.015 * rel;
            let f_hi = 0.05 + 0.05 * rel;
            let amp = 1.0 / (1.0 + d as f64).sqrt();
            let parts: Vec<(f64, f64, f64)> = (0..PARTIALS)
                .map(|_| {
                    (
                        rng.random_range(f_lo..f_hi),
                        rng.random_range(0.0..2.0 * PI),
                        amp * rng.random_range(0.5..1.0),
                    )
                })
                .collect();
            let raw: Vec<f64> = (0..t)
                .map(|i| {
                    let noise: f64 = rng.random_range(-0.5..0.5) * 0.2 * amp;
                    parts
                        .iter()
                        .map(|&(f, ph, a)| a * (2.0 * PI * f * i as f64 + ph).sin())
                        .sum::<f64>()
                        + noise
                })
                .collect();
            fir(&raw, (0.25, 0.25)).iter().map(|v| v / 1.5).collect()
        })
        .collect()
}

/// A generated corpus with its transforms. Evaluation targets are the
/// target speaker applied to the evaluation content of the source speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub transform_a: SpeakerTransform,
    pub transform_b: SpeakerTransform,
    pub train_a: Vec<FeatureSequence>,
    pub train_b: Vec<FeatureSequence>,
    pub eval_a: Vec<FeatureSequence>,
    pub eval_b: Vec<FeatureSequence>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let transform_a = SpeakerTransform::draw(&spec.speaker_a, spec.q, &mut rng);
    let transform_b = SpeakerTransform::draw(&spec.speaker_b, spec.q, &mut rng);
    let (lo, hi) = spec.t_range;
    let draw = |rng: &mut ChaCha8Rng| {
        let t = rng.random_range(lo..=hi);
        draw_content(spec.q, t, rng)
    };
    let mut train_a = Vec::with_capacity(spec.n_train);
    let mut train_b = Vec::with_capacity(spec.n_train);
    for _ in 0..spec.n_train {
        train_a.push(transform_a.apply(&draw(&mut rng))?);
        train_b.push(transform_b.apply(&draw(&mut rng))?);
    }
    let mut eval_a = Vec::with_capacity(spec.n_eval);
    let mut eval_b = Vec::with_capacity(spec.n_eval);
    for _ in 0..spec.n_eval {
        let c = draw(&mut rng);
        eval_a.push(transform_a.apply(&c)?);
        eval_b.push(transform_b.apply(&c)?);
    }
    Ok(SynthCorpus {
        transform_a,
        transform_b,
        train_a,
        train_b,
        eval_a,
        eval_b,
    })
}

/// The exact source-to-target map `T_B ∘ T_A⁻¹`.
pub fn ground_truth_map(
    a: &SpeakerTransform,
    b: &SpeakerTransform,
    x: &FeatureSequence,
) -> Result<FeatureSequence> {
    b.apply(&a.invert(x)?)
}
