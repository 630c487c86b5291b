//! Alternating least-squares training of the two generators and their
//! discriminators.
//!
//! One iteration draws one crop per speaker (per batch element), updates
//! every active discriminator on the current generator outputs, then
//! updates both generators jointly against the updated discriminators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{compute_stats, denormalize, normalize, FeatureSequence, NormStats};
use crate::losses::{
    assemble_g, constant_batch, tape_l1_pairs, tape_lsgan_d, tape_lsgan_g, GeneratorTerms, LossReport, LossWeights,
};
use crate::models::{
    Discriminator, DiscriminatorKind, DiscriminatorSpec, Generator, GeneratorKind, GeneratorSpec, ModelSet, ParamSet,
};
use crate::optim::{adam_step, AdamConfig, Moments};
use crate::tape::{Tape, Var};

pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Stream of the crop sampler; network initializations use derived seeds.
const CROP_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub iterations: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub id_cutoff_iter: u64,
    pub adv_steps: u8,
    pub generator_kind: GeneratorKind,
    pub discriminator_kind: DiscriminatorKind,
    pub seed: u64,
    /// Divides every generator channel width; 1 is the full-size network.
    pub g_channel_divisor: usize,
    /// Same for the discriminators.
    pub d_channel_divisor: usize,
    pub residual_blocks: usize,
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            lr_g: 2e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            batch_size: 1,
            crop_frames: 128,
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            id_cutoff_iter: 10_000,
            adv_steps: 2,
            generator_kind: GeneratorKind::TwoOneTwoD,
            discriminator_kind: DiscriminatorKind::Patch,
            seed: 0,
            g_channel_divisor: 1,
            d_channel_divisor: 1,
            residual_blocks: 6,
            checkpoint_every: 5000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.crop_frames % 4 != 0 || self.crop_frames < 16 {
            return bad(format!(
                "crop_frames must be a multiple of 4 and at least 16, got {}",
                self.crop_frames
            ));
        }
        if self.id_cutoff_iter > self.iterations {
            return bad(format!(
                "id_cutoff_iter ({}) exceeds iterations ({})",
                self.id_cutoff_iter, self.iterations
            ));
        }
        for (name, d) in [("g_channel_divisor", self.g_channel_divisor), ("d_channel_divisor", self.d_channel_divisor)] {
            if d == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.residual_blocks == 0 {
            return bad("residual_blocks must be >= 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be >= 1".into());
        }
        self.weights().validate()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_cyc: self.lambda_cyc,
            lambda_id: self.lambda_id,
            adv_steps: self.adv_steps,
        }
    }

    pub fn generator_spec(&self, q: usize) -> GeneratorSpec {
        GeneratorSpec {
            kind: self.generator_kind,
            q,
            channel_divisor: self.g_channel_divisor,
            residual_blocks: self.residual_blocks,
        }
    }

    pub fn discriminator_spec(&self, q: usize) -> DiscriminatorSpec {
        DiscriminatorSpec {
            kind: self.discriminator_kind,
            q,
            frames: self.crop_frames,
            channel_divisor: self.d_channel_divisor,
        }
    }

    /// Whether the identity term is part of iteration `iteration` (0-based).
    pub fn id_active(&self, iteration: u64) -> bool {
        iteration < self.id_cutoff_iter
    }
}

/// Normalized training sequences of one speaker with their statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sequences: Vec<FeatureSequence>,
    stats: NormStats,
}

impl Corpus {
    /// Computes statistics over `raw` and normalizes with them.
    pub fn from_raw(raw: &[FeatureSequence]) -> Result<Self> {
        let stats = compute_stats(raw)?;
        Self::with_stats(raw, stats)
    }

    pub fn with_stats(raw: &[FeatureSequence], stats: NormStats) -> Result<Self> {
        stats.validate()?;
        let sequences = raw.iter().map(|s| normalize(s, &stats)).collect::<Result<Vec<_>>>()?;
        if sequences.is_empty() {
            return Err(Error::InvalidArgument("empty corpus".into()));
        }
        Ok(Self { sequences, stats })
    }

    pub fn q(&self) -> usize {
        self.stats.q()
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn sequences(&self) -> &[FeatureSequence] {
        &self.sequences
    }

    /// Indices of sequences long enough for `frames`-frame crops.
    pub fn eligible(&self, frames: usize) -> Vec<usize> {
        (0..self.sequences.len())
            .filter(|&i| self.sequences[i].t() >= frames)
            .collect()
    }

    /// Crop from a uniformly chosen sequence among those long enough;
    /// shorter sequences are never drawn, truncated or padded.
    pub fn sample_crop(&self, frames: usize, rng: &mut ChaCha8Rng) -> Result<FeatureSequence> {
        let ok = self.eligible(frames);
        if ok.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no training sequence has at least {frames} frames"
            )));
        }
        let i = ok[rng.random_range(0..ok.len())];
        random_crop(&self.sequences[i], frames, rng)
    }
}

/// Contiguous `frames`-column slice with a uniform start.
pub fn random_crop(x: &FeatureSequence, frames: usize, rng: &mut ChaCha8Rng) -> Result<FeatureSequence> {
    if frames == 0 || x.t() < frames {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {frames} frames from a sequence of {}",
            x.t()
        )));
    }
    let start = rng.random_range(0..=x.t() - frames);
    x.slice_frames(start, frames)
}

/// Serializable position of a [`ChaCha8Rng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything that determines the rest of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainingConfig,
    pub models: ModelSet<f32>,
    /// Adam moments per network, aligned with [`ModelSet::networks`].
    pub moments: Vec<Vec<Moments<f32>>>,
    pub rng: ChaCha8Rng,
    /// Completed iterations.
    pub iteration: u64,
}

fn zero_moments(p: &ParamSet<f32>) -> Vec<Moments<f32>> {
    p.values().iter().map(|g| Moments::zeros(g.shape().len())).collect()
}

impl TrainState {
    pub fn new(config: TrainingConfig, q: usize) -> Result<Self> {
        config.validate()?;
        let models = ModelSet::build(
            config.generator_spec(q),
            config.discriminator_spec(q),
            config.adv_steps == 2,
            config.seed,
        )?;
        let moments = models.networks().iter().map(|(_, p)| zero_moments(p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(CROP_STREAM);
        Ok(Self {
            config,
            models,
            moments,
            rng,
            iteration: 0,
        })
    }

    /// Reassembles a state, checking that every part agrees with `config`.
    pub fn from_parts(
        config: TrainingConfig,
        models: ModelSet<f32>,
        moments: Vec<Vec<Moments<f32>>>,
        rng: ChaCha8Rng,
        iteration: u64,
    ) -> Result<Self> {
        config.validate()?;
        let q = models.g_xy.spec.q;
        let expect = TrainState::new(config.clone(), q)?;
        let (a, b) = (expect.models.networks(), models.networks());
        if a.len() != b.len() {
            return Err(Error::Config(format!(
                "configuration needs {} networks, state has {}",
                a.len(),
                b.len()
            )));
        }
        for ((name, pa), (_, pb)) in a.iter().zip(&b) {
            pa.check_layout(pb)
                .map_err(|e| Error::Config(format!("network {name}: {e}")))?;
        }
        if moments.len() != b.len()
            || moments.iter().zip(&b).any(|(m, (_, p))| {
                m.len() != p.len()
                    || m.iter()
                        .zip(p.values())
                        .any(|(mm, g)| mm.m.len() != g.shape().len() || mm.v.len() != g.shape().len())
            })
        {
            return Err(Error::Config("optimizer state does not match the networks".into()));
        }
        Ok(Self {
            config,
            models,
            moments,
            rng,
            iteration,
        })
    }

    pub fn q(&self) -> usize {
        self.models.g_xy.spec.q
    }

    /// Draws the next pair of batches from the crop sampler.
    pub fn sample_batches(&mut self, cx: &Corpus, cy: &Corpus) -> Result<(Vec<FeatureSequence>, Vec<FeatureSequence>)> {
        let n = self.config.crop_frames;
        let mut xs = Vec::with_capacity(self.config.batch_size);
        let mut ys = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            xs.push(cx.sample_crop(n, &mut self.rng)?);
            ys.push(cy.sample_crop(n, &mut self.rng)?);
        }
        Ok((xs, ys))
    }
}

fn check_finite(iteration: u64, term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            iteration,
            term: term.into(),
        })
    }
}

fn update(
    params: &mut ParamSet<f32>,
    vars: &[Var],
    tape: &Tape<f32>,
    moments: &mut [Moments<f32>],
    cfg: &AdamConfig,
    t: u64,
    net: &str,
) -> Result<()> {
    let names: Vec<String> = params.names().to_vec();
    for (((p, &v), m), name) in params.values_mut().iter_mut().zip(vars).zip(moments).zip(&names) {
        let zeros;
        let g = match tape.grad(v) {
            Some(g) => g,
            None => {
                zeros = vec![0.0f32; p.shape().len()];
                &zeros
            }
        };
        adam_step(p.data_mut(), g, m, cfg, t).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite {
                iteration: t - 1,
                term: format!("gradient of {net}.{name}"),
            },
            e => e,
        })?;
    }
    Ok(())
}

fn scores(tape: &mut Tape<f32>, d: &Discriminator<f32>, params: &[Var], x: Var) -> Result<Var> {
    d.forward(tape, params, x)
}

/// One discriminator update followed by one generator update on the given
/// normalized crops.
pub fn train_step(state: &mut TrainState, xb: &[FeatureSequence], yb: &[FeatureSequence]) -> Result<LossReport> {
    let cfg = state.config.clone();
    let it = state.iteration;
    let t = it + 1;
    let w = cfg.weights();
    let two = cfg.adv_steps == 2;
    let xr: Vec<&FeatureSequence> = xb.iter().collect();
    let yr: Vec<&FeatureSequence> = yb.iter().collect();
    let models = &state.models;

    let mut gt = Tape::<f32>::new();
    let p_gxy = models.g_xy.params.bind(&mut gt, true);
    let p_gyx = models.g_yx.params.bind(&mut gt, true);
    let x = constant_batch(&mut gt, &xr)?;
    let y = constant_batch(&mut gt, &yr)?;
    let fake_y = models.g_xy.forward(&mut gt, &p_gxy, x)?;
    let cyc_x = models.g_yx.forward(&mut gt, &p_gyx, fake_y)?;
    let fake_x = models.g_yx.forward(&mut gt, &p_gyx, y)?;
    let cyc_y = models.g_xy.forward(&mut gt, &p_gxy, fake_x)?;
    let ids = if cfg.id_active(it) {
        Some((
            models.g_xy.forward(&mut gt, &p_gxy, y)?,
            models.g_yx.forward(&mut gt, &p_gyx, x)?,
        ))
    } else {
        None
    };

    // Discriminator phase: generator outputs enter as constants.
    let mut dt = Tape::<f32>::new();
    let p_dx = models.d_x.params.bind(&mut dt, true);
    let p_dy = models.d_y.params.bind(&mut dt, true);
    let p_d2x = models.d2_x.as_ref().map(|d| d.params.bind(&mut dt, true));
    let p_d2y = models.d2_y.as_ref().map(|d| d.params.bind(&mut dt, true));
    let mut copy = |v: Var| dt.constant(gt.value(v).clone());
    let (dx_real, dy_real) = (copy(x), copy(y));
    let (d_fake_y, d_fake_x) = (copy(fake_y), copy(fake_x));
    let (d_cyc_x, d_cyc_y) = (copy(cyc_x), copy(cyc_y));
    let a = {
        let r = scores(&mut dt, &models.d_y, &p_dy, dy_real)?;
        let f = scores(&mut dt, &models.d_y, &p_dy, d_fake_y)?;
        tape_lsgan_d(&mut dt, r, f)?
    };
    let b = {
        let r = scores(&mut dt, &models.d_x, &p_dx, dx_real)?;
        let f = scores(&mut dt, &models.d_x, &p_dx, d_fake_x)?;
        tape_lsgan_d(&mut dt, r, f)?
    };
    let adv_d = dt.weighted_sum(&[(a, 1.0), (b, 1.0)])?;
    let mut d_terms = vec![(adv_d, 1.0f32)];
    let mut adv2_d = None;
    if two {
        let (d2x, d2y) = missing_second(models)?;
        let (p2x, p2y) = (p_d2x.as_deref().unwrap_or(&[]), p_d2y.as_deref().unwrap_or(&[]));
        let a = {
            let r = scores(&mut dt, d2x, p2x, dx_real)?;
            let f = scores(&mut dt, d2x, p2x, d_cyc_x)?;
            tape_lsgan_d(&mut dt, r, f)?
        };
        let b = {
            let r = scores(&mut dt, d2y, p2y, dy_real)?;
            let f = scores(&mut dt, d2y, p2y, d_cyc_y)?;
            tape_lsgan_d(&mut dt, r, f)?
        };
        let v = dt.weighted_sum(&[(a, 1.0), (b, 1.0)])?;
        d_terms.push((v, 1.0));
        adv2_d = Some(v);
    }
    let total_d = dt.weighted_sum(&d_terms)?;
    let mut report = LossReport {
        adv_d: check_finite(it, "adv_d", dt.scalar(adv_d) as f64)?,
        adv2_d: match adv2_d {
            Some(v) => check_finite(it, "adv2_d", dt.scalar(v) as f64)?,
            None => 0.0,
        },
        total_d: check_finite(it, "total_d", dt.scalar(total_d) as f64)?,
        ..Default::default()
    };
    dt.backward(total_d)?;

    let adam_d = AdamConfig {
        lr: cfg.lr_d,
        beta1: cfg.beta1,
        beta2: ADAM_BETA2,
        eps: ADAM_EPS,
    };
    let adam_g = AdamConfig { lr: cfg.lr_g, ..adam_d };

    // Update discriminators; the generator graph in `gt` is unaffected.
    let TrainState { models, moments, .. } = state;
    update(&mut models.d_x.params, &p_dx, &dt, &mut moments[2], &adam_d, t, "d_x")?;
    update(&mut models.d_y.params, &p_dy, &dt, &mut moments[3], &adam_d, t, "d_y")?;
    if let (Some(d), Some(p)) = (models.d2_x.as_mut(), p_d2x.as_ref()) {
        update(&mut d.params, p, &dt, &mut moments[4], &adam_d, t, "d2_x")?;
    }
    if let (Some(d), Some(p)) = (models.d2_y.as_mut(), p_d2y.as_ref()) {
        update(&mut d.params, p, &dt, &mut moments[5], &adam_d, t, "d2_y")?;
    }
    drop(dt);

    // Generator phase against the updated discriminators, held constant.
    let q_dx = models.d_x.params.bind(&mut gt, false);
    let q_dy = models.d_y.params.bind(&mut gt, false);
    let a = {
        let s = scores(&mut gt, &models.d_y, &q_dy, fake_y)?;
        tape_lsgan_g(&mut gt, s)?
    };
    let b = {
        let s = scores(&mut gt, &models.d_x, &q_dx, fake_x)?;
        tape_lsgan_g(&mut gt, s)?
    };
    let adv = gt.weighted_sum(&[(a, 1.0), (b, 1.0)])?;
    let adv2 = if two {
        let (d2x, d2y) = missing_second(models)?;
        let q2x = d2x.params.bind(&mut gt, false);
        let q2y = d2y.params.bind(&mut gt, false);
        let a = {
            let s = scores(&mut gt, d2x, &q2x, cyc_x)?;
            tape_lsgan_g(&mut gt, s)?
        };
        let b = {
            let s = scores(&mut gt, d2y, &q2y, cyc_y)?;
            tape_lsgan_g(&mut gt, s)?
        };
        Some(gt.weighted_sum(&[(a, 1.0), (b, 1.0)])?)
    } else {
        None
    };
    let cyc = tape_l1_pairs(&mut gt, &[(x, cyc_x), (y, cyc_y)])?;
    let id = match ids {
        Some((id_y, id_x)) => Some(tape_l1_pairs(&mut gt, &[(y, id_y), (x, id_x)])?),
        None => None,
    };
    let terms = GeneratorTerms { adv, adv2, cyc, id };
    let total_g = assemble_g(&mut gt, &terms, &w)?;
    report.adv_g = check_finite(it, "adv_g", gt.scalar(adv) as f64)?;
    if let Some(v) = adv2 {
        report.adv2_g = check_finite(it, "adv2_g", gt.scalar(v) as f64)?;
    }
    report.cyc = check_finite(it, "cyc", gt.scalar(cyc) as f64)?;
    if let Some(v) = id {
        report.id = check_finite(it, "id", gt.scalar(v) as f64)?;
    }
    report.total_g = check_finite(it, "total_g", gt.scalar(total_g) as f64)?;
    gt.backward(total_g)?;

    update(&mut models.g_xy.params, &p_gxy, &gt, &mut moments[0], &adam_g, t, "g_xy")?;
    update(&mut models.g_yx.params, &p_gyx, &gt, &mut moments[1], &adam_g, t, "g_yx")?;
    state.iteration += 1;
    Ok(report)
}

fn missing_second(models: &ModelSet<f32>) -> Result<(&Discriminator<f32>, &Discriminator<f32>)> {
    match (&models.d2_x, &models.d2_y) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Config(
            "adv_steps = 2 but the second-step discriminators are missing".into(),
        )),
    }
}

/// Samples crops and runs one [`train_step`].
pub fn train_iteration(state: &mut TrainState, cx: &Corpus, cy: &Corpus) -> Result<LossReport> {
    let (xb, yb) = state.sample_batches(cx, cy)?;
    train_step(state, &xb, &yb)
}

/// Runs iterations until `config.iterations`, calling `on_step` after each
/// one with the updated state.
pub fn train<E: From<Error>>(
    state: &mut TrainState,
    cx: &Corpus,
    cy: &Corpus,
    mut on_step: impl FnMut(&TrainState, &LossReport) -> core::result::Result<(), E>,
) -> core::result::Result<(), E> {
    if cx.q() != cy.q() || cx.q() != state.q() {
        return Err(Error::Config(format!(
            "dimension mismatch: speaker X has {}, speaker Y has {}, model has {}",
            cx.q(),
            cy.q(),
            state.q()
        ))
        .into());
    }
    while state.iteration < state.config.iterations {
        let report = train_iteration(state, cx, cy)?;
        on_step(state, &report)?;
    }
    Ok(())
}

/// Source features to target features: normalize with the source
/// statistics, convert at any length, denormalize with the target
/// statistics.
pub fn convert_utterance(
    generator: &Generator<f32>,
    source: &NormStats,
    target: &NormStats,
    x: &FeatureSequence,
) -> Result<FeatureSequence> {
    let y = generator.apply_any_length(&normalize(x, source)?)?;
    denormalize(&y, target)
}
