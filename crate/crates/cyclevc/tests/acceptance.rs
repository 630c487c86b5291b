//! Acceptance suite. Each criterion prints one `criterion N: PASS|FAIL` line
//! on stderr (uncaptured) before asserting.
//!
//! Criteria 5 and 6 share nine desk-scale training runs (three variants by
//! three seeds) that are computed once per process.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use cyclevc::checkpoint::{self, Checkpoint};
use cyclevc::commands::{cmd_convert, cmd_gradcheck, evaluate, ConvertOptions, Direction, GRADCHECK_TOL};
use cyclevc::mcp;
use cyclevc::synth_cmd::cmd_synth;
use cyclevc::train::{cmd_train, execute, prepare, TrainOptions, FINAL_CHECKPOINT, LOSS_FILE};
use cyclevc_core::features::{
    compute_logf0_stats, compute_stats, convert_f0, to_grid, FeatureSequence, LogF0Stats,
};
use cyclevc_core::grid::Grid;
use cyclevc_core::losses::{
    assemble_g, lsgan_d_loss, lsgan_g_loss, tape_l1_pairs, tape_lsgan_g, total_objective, GeneratorTerms,
    LossReport, LossWeights,
};
use cyclevc_core::metrics::{dtw_align, mcd_utterance, msd};
use cyclevc_core::models::{
    Discriminator, DiscriminatorKind, DiscriminatorSpec, Generator, GeneratorKind, GeneratorSpec, ModelSet,
};
use cyclevc_core::training::{train_step, TrainState, TrainingConfig};
use cyclevc_core::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Collects named checks and reports them as one line.
struct Criterion {
    n: u8,
    title: &'static str,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(n: u8, title: &'static str) -> Self {
        Self { n, title, checks: Vec::new() }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn finish(self) {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {}: {verdict} ({})", self.n, self.title);
        for (what, ok) in &self.checks {
            let _ = write!(line, "\n    [{}] {what}", if *ok { "ok" } else { "FAILED" });
        }
        let _ = writeln!(std::io::stderr(), "{line}");
        assert!(failed.is_empty(), "criterion {} failed: {}", self.n, failed.join("; "));
    }
}

/// Runtime bounds are only meaningful without competing tests.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn random_seq(q: usize, t: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
    FeatureSequence::from_fn(q, t, |_, _| rng.random_range(-2.0..2.0)).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

#[test]
fn criterion_1_gradient_correctness() {
    let _serial = serial();
    let mut c = Criterion::new(1, "gradcheck of every neural op below 1e-4 in under a minute");
    let start = Instant::now();
    let reports = cmd_gradcheck(None).map_err(|f| f.error.to_string());
    let elapsed = start.elapsed();
    c.check(format!("suite completes: {:?}", reports.as_ref().err()), reports.is_ok());
    let reports = reports.unwrap_or_default();
    for op in ["conv1d", "conv2d", "glu", "instance_norm", "pixel_shuffle"] {
        let found: Vec<_> = reports.iter().filter(|r| r.name == op).collect();
        let ok = found.len() == 1 && found[0].max_rel_err < GRADCHECK_TOL && found[0].coords > 0;
        let err = found.first().map_or(f64::NAN, |r| r.max_rel_err);
        c.check(format!("{op}: max relative error {err:.2e}"), ok);
    }
    c.check(format!("runtime {:.1}s < 60s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(60));
    c.finish();
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

fn frame(s: &FeatureSequence, i: usize) -> Vec<f64> {
    (1..s.q()).map(|d| s.get(d, i) as f64).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Cost of every monotone unit-step path from the first to the last frame pair.
fn exhaustive_costs(a: &FeatureSequence, b: &FeatureSequence) -> Vec<(f64, Vec<(usize, usize)>)> {
    let (n, m) = (a.t(), b.t());
    let mut out = Vec::new();
    let mut stack = vec![vec![(0usize, 0usize)]];
    while let Some(path) = stack.pop() {
        let (i, j) = *path.last().unwrap();
        if (i, j) == (n - 1, m - 1) {
            let cost = path.iter().map(|&(i, j)| euclid(&frame(a, i), &frame(b, j))).sum();
            out.push((cost, path));
            continue;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i + di < n && j + dj < m {
                let mut next = path.clone();
                next.push((i + di, j + dj));
                stack.push(next);
            }
        }
    }
    out
}

fn mcd_straight(a: &FeatureSequence, b: &FeatureSequence, path: &[(usize, usize)]) -> f64 {
    let k = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    let sum: f64 = path.iter().map(|&(i, j)| euclid(&frame(a, i), &frame(b, j))).sum();
    k * sum / path.len() as f64
}

fn log_modulation_spectrum(x: &[f64]) -> Vec<f64> {
    use std::f64::consts::PI;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut v: Vec<f64> = x.iter().map(|s| s - mean).collect();
    v.resize(v.len().max(64), 0.0);
    let segments: Vec<usize> = (0..).map(|s| s * 32).take_while(|s| s + 64 <= v.len()).collect();
    (0..=32)
        .map(|k| {
            let mut p = 0.0;
            for &s in &segments {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..64 {
                    let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / 64.0).cos();
                    let ang = -2.0 * PI * (k * n) as f64 / 64.0;
                    re += w * v[s + n] * ang.cos();
                    im += w * v[s + n] * ang.sin();
                }
                p += re * re + im * im;
            }
            (p / segments.len() as f64).max(1e-10).log10()
        })
        .collect()
}

fn msd_straight(a: &FeatureSequence, b: &FeatureSequence) -> f64 {
    let (mut sum, mut n) = (0.0, 0.0);
    for d in 1..a.q() {
        let sa = log_modulation_spectrum(&a.dim(d).iter().map(|&v| v as f64).collect::<Vec<_>>());
        let sb = log_modulation_spectrum(&b.dim(d).iter().map(|&v| v as f64).collect::<Vec<_>>());
        for (p, q) in sa.iter().zip(&sb) {
            sum += (10.0 * (p - q)).powi(2);
            n += 1.0;
        }
    }
    (sum / n).sqrt()
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _serial = serial();
    let mut c = Criterion::new(2, "DTW, MCD and MSD against independent oracles");
    let mut rng = ChaCha8Rng::seed_from_u64(0xD7);
    let (mut dtw_ok, mut path_ok) = (0, 0);
    for _ in 0..200 {
        let q = rng.random_range(2..6);
        let (tc, tt) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let (a, b) = (random_seq(q, tc, &mut rng), random_seq(q, tt, &mut rng));
        let (path, cost) = dtw_align(&a, &b).unwrap();
        let all = exhaustive_costs(&a, &b);
        let best = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        dtw_ok += usize::from(cost == best);
        let own: f64 = path.0.iter().map(|&(i, j)| euclid(&frame(&a, i), &frame(&b, j))).sum();
        path_ok += usize::from(own == best && all.iter().any(|p| p.1 == path.0));
    }
    c.check(format!("DTW cost equals exhaustive minimum on {dtw_ok}/200 pairs"), dtw_ok == 200);
    c.check(format!("DTW path is a valid minimizing path on {path_ok}/200 pairs"), path_ok == 200);

    let (mut worst_mcd, mut worst_msd) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let q = rng.random_range(2..6);
        let (tc, tt) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let (a, b) = (random_seq(q, tc, &mut rng), random_seq(q, tt, &mut rng));
        let all = exhaustive_costs(&a, &b);
        let best = all.iter().min_by(|x, y| x.0.total_cmp(&y.0)).unwrap();
        worst_mcd = worst_mcd.max((mcd_utterance(&a, &b).unwrap() - mcd_straight(&a, &b, &best.1)).abs());

        let (ta, tb) = (rng.random_range(1..200), rng.random_range(1..200));
        let (a, b) = (random_seq(q, ta, &mut rng), random_seq(q, tb, &mut rng));
        worst_msd = worst_msd.max((msd(&a, &b).unwrap() - msd_straight(&a, &b)).abs());
    }
    c.check(format!("MCD worst deviation {worst_mcd:.1e} over 100 inputs"), worst_mcd <= 1e-9);
    c.check(format!("MSD worst deviation {worst_msd:.1e} over 100 inputs"), worst_msd <= 1e-9);
    c.finish();
}

// ---------------------------------------------------------------------------
// 3. Objective assembly

fn small_models(two: bool, seed: u64) -> ModelSet<f64> {
    let (q, t) = (6, 16);
    let g = GeneratorSpec { kind: GeneratorKind::TwoOneTwoD, q, channel_divisor: 32, residual_blocks: 1 };
    let d = DiscriminatorSpec { kind: DiscriminatorKind::Patch, q, frames: t, channel_divisor: 32 };
    ModelSet::build(g, d, two, seed).unwrap()
}

/// Output grid of `g` on `x`, evaluated on a tape of its own.
fn run_g(g: &Generator<f64>, x: &Grid<f64>) -> Grid<f64> {
    let mut tape = Tape::new();
    let p = g.params.bind(&mut tape, false);
    let v = tape.constant(x.clone());
    let out = g.forward(&mut tape, &p, v).unwrap();
    tape.value(out).clone()
}

fn run_d(d: &Discriminator<f64>, x: &Grid<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = d.params.bind(&mut tape, false);
    let v = tape.constant(x.clone());
    let out = d.forward(&mut tape, &p, v).unwrap();
    tape.value(out).data().to_vec()
}

fn ls_to_one(s: &[f64]) -> f64 {
    s.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / s.len() as f64
}

fn l1(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.data().len() as f64
}

/// Generator objective as recorded by the library on one tape.
fn library_total(m: &ModelSet<f64>, x: &Grid<f64>, y: &Grid<f64>, w: &LossWeights, with_id: bool) -> f64 {
    let mut tape = Tape::new();
    let pxy = m.g_xy.params.bind(&mut tape, true);
    let pyx = m.g_yx.params.bind(&mut tape, true);
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let fake_y = m.g_xy.forward(&mut tape, &pxy, xv).unwrap();
    let cyc_x = m.g_yx.forward(&mut tape, &pyx, fake_y).unwrap();
    let fake_x = m.g_yx.forward(&mut tape, &pyx, yv).unwrap();
    let cyc_y = m.g_xy.forward(&mut tape, &pxy, fake_x).unwrap();
    let adv_of = |tape: &mut Tape<f64>, d: &Discriminator<f64>, v: Var| {
        let p = d.params.bind(tape, false);
        let s = d.forward(tape, &p, v).unwrap();
        tape_lsgan_g(tape, s).unwrap()
    };
    let (a, b) = (adv_of(&mut tape, &m.d_y, fake_y), adv_of(&mut tape, &m.d_x, fake_x));
    let adv = tape.weighted_sum(&[(a, 1.0), (b, 1.0)]).unwrap();
    let adv2 = (w.adv_steps == 2).then(|| {
        let a = adv_of(&mut tape, m.d2_x.as_ref().unwrap(), cyc_x);
        let b = adv_of(&mut tape, m.d2_y.as_ref().unwrap(), cyc_y);
        tape.weighted_sum(&[(a, 1.0), (b, 1.0)]).unwrap()
    });
    let cyc = tape_l1_pairs(&mut tape, &[(xv, cyc_x), (yv, cyc_y)]).unwrap();
    let id = with_id.then(|| {
        let iy = m.g_xy.forward(&mut tape, &pxy, yv).unwrap();
        let ix = m.g_yx.forward(&mut tape, &pyx, xv).unwrap();
        tape_l1_pairs(&mut tape, &[(yv, iy), (xv, ix)]).unwrap()
    });
    let total = assemble_g(&mut tape, &GeneratorTerms { adv, adv2, cyc, id }, w).unwrap();
    tape.scalar(total)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn criterion_3_objective_assembly() {
    let _serial = serial();
    let mut c = Criterion::new(3, "objective equals its hand assembly; two steps add exactly two terms");
    let mut rng = ChaCha8Rng::seed_from_u64(0x0B);
    let (lc, li) = (10.0, 5.0);
    for trial in 0..4 {
        let m = small_models(true, trial);
        let x = to_grid::<f64>(&[&random_seq(6, 16, &mut rng)]).unwrap();
        let y = to_grid::<f64>(&[&random_seq(6, 16, &mut rng)]).unwrap();
        let fake_y = run_g(&m.g_xy, &x);
        let fake_x = run_g(&m.g_yx, &y);
        let cyc_x = run_g(&m.g_yx, &fake_y);
        let cyc_y = run_g(&m.g_xy, &fake_x);
        let (id_y, id_x) = (run_g(&m.g_xy, &y), run_g(&m.g_yx, &x));
        let adv = ls_to_one(&run_d(&m.d_y, &fake_y)) + ls_to_one(&run_d(&m.d_x, &fake_x));
        let cyc = l1(&x, &cyc_x) + l1(&y, &cyc_y);
        let id = l1(&y, &id_y) + l1(&x, &id_x);
        let adv2 = ls_to_one(&run_d(m.d2_x.as_ref().unwrap(), &cyc_x))
            + ls_to_one(&run_d(m.d2_y.as_ref().unwrap(), &cyc_y));

        let one = LossWeights::new(lc, li, 1).unwrap();
        let two = LossWeights::new(lc, li, 2).unwrap();
        for with_id in [true, false] {
            let hand = adv + lc * cyc + if with_id { li * id } else { 0.0 };
            let got1 = library_total(&m, &x, &y, &one, with_id);
            c.check(format!("trial {trial} id={with_id}: one step {got1} vs hand {hand}"), close(got1, hand));
            let got2 = library_total(&m, &x, &y, &two, with_id);
            c.check(
                format!("trial {trial} id={with_id}: second step adds {} vs {adv2}", got2 - got1),
                close(got2, hand + adv2),
            );
        }

        // Value-level evaluators and the reported totals follow the same form.
        let seqs = |g: &Grid<f64>| cyclevc_core::features::from_grid(g).unwrap().remove(0);
        let report = LossReport {
            adv_g: lsgan_g_loss(&run_d(&m.d_y, &fake_y)).unwrap() + lsgan_g_loss(&run_d(&m.d_x, &fake_x)).unwrap(),
            adv_d: lsgan_d_loss(&run_d(&m.d_y, &y), &run_d(&m.d_y, &fake_y)).unwrap()
                + lsgan_d_loss(&run_d(&m.d_x, &x), &run_d(&m.d_x, &fake_x)).unwrap(),
            adv2_g: adv2,
            adv2_d: lsgan_d_loss(&run_d(m.d2_x.as_ref().unwrap(), &x), &run_d(m.d2_x.as_ref().unwrap(), &cyc_x))
                .unwrap()
                + lsgan_d_loss(&run_d(m.d2_y.as_ref().unwrap(), &y), &run_d(m.d2_y.as_ref().unwrap(), &cyc_y))
                    .unwrap(),
            cyc: cyclevc_core::losses::cycle_loss(&seqs(&x), &seqs(&cyc_x), &seqs(&y), &seqs(&cyc_y)).unwrap(),
            id: 0.25,
            ..Default::default()
        };
        let hand_d = ls_to_one(&run_d(&m.d_y, &y))
            + run_d(&m.d_y, &fake_y).iter().map(|s| s * s).sum::<f64>() / run_d(&m.d_y, &fake_y).len() as f64
            + ls_to_one(&run_d(&m.d_x, &x))
            + run_d(&m.d_x, &fake_x).iter().map(|s| s * s).sum::<f64>() / run_d(&m.d_x, &fake_x).len() as f64;
        c.check(format!("trial {trial}: discriminator objective by hand"), close(report.adv_d, hand_d));
        c.check(format!("trial {trial}: adversarial generator term by hand"), close(report.adv_g, adv));
        let (g1, d1) = total_objective(&report, &one, true);
        let (g2, d2) = total_objective(&report, &two, true);
        c.check(
            format!("trial {trial}: reported totals differ by exactly the second-step terms"),
            close(g2 - g1, report.adv2_g) && close(d2 - d1, report.adv2_d) && d1 == report.adv_d,
        );
        c.check(
            format!("trial {trial}: reported one-step total"),
            close(g1, report.adv_g + lc * report.cyc + li * report.id),
        );
    }
    c.finish();
}

// ---------------------------------------------------------------------------
// 4. Determinism and resume

fn tiny_corpus(dir: &Path) {
    fs::write(
        dir.join("synth.cfg"),
        "seed = 4\nn_train = 4\nn_eval = 2\nq = 8\nt_min = 40\nt_max = 60\n",
    )
    .unwrap();
    cmd_synth(Some(&dir.join("synth.cfg")), &dir.join("data"), None).unwrap();
}

fn write_config(dir: &Path, name: &str, data: &Path, body: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        "{body}manifest_x = {}\nmanifest_y = {}\n",
        data.join("a_train.txt").display(),
        data.join("b_train.txt").display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn train(config: &Path, out: &Path, resume: Option<PathBuf>) {
    let opts = TrainOptions { config: config.into(), out: Some(out.into()), seed: None, resume };
    if let Err(f) = cmd_train(&opts) {
        panic!("training {} failed: {}", out.display(), f.error);
    }
}

#[test]
fn criterion_4_determinism_and_resume() {
    let _serial = serial();
    let mut c = Criterion::new(4, "bit-identical reruns and bit-exact resume at 50 of 100");
    let dir = scratch("c4");
    tiny_corpus(&dir);
    let body = "iterations = 100\ncheckpoint_every = 50\ncrop_frames = 32\ng_channel_divisor = 16\n\
                d_channel_divisor = 32\nresidual_blocks = 2\nid_cutoff_iter = 30\nseed = 11\n";
    let cfg = write_config(&dir, "run.cfg", &dir.join("data"), body);
    train(&cfg, &dir.join("first"), None);
    train(&cfg, &dir.join("second"), None);
    let bytes = |p: &str| fs::read(dir.join(p)).unwrap();
    for f in ["checkpoints/iter_00000050.cvc", "checkpoints/iter_00000100.cvc", FINAL_CHECKPOINT, LOSS_FILE] {
        c.check(format!("same seed: {f} identical"), bytes(&format!("first/{f}")) == bytes(&format!("second/{f}")));
    }
    train(&cfg, &dir.join("resumed"), Some(dir.join("first/checkpoints/iter_00000050.cvc")));
    c.check(
        "resumed final checkpoint equals uninterrupted one",
        bytes("first/final.cvc") == bytes("resumed/final.cvc"),
    );
    let after_50 = |p: &str| {
        String::from_utf8(bytes(p))
            .unwrap()
            .lines()
            .filter(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() > 50)
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (full, resumed) = (after_50("first/loss.csv"), after_50("resumed/loss.csv"));
    c.check("resumed loss rows 51..100 equal", full.len() == 50 && full == resumed);
    let other = write_config(&dir, "other.cfg", &dir.join("data"), &body.replace("seed = 11", "seed = 12"));
    train(&other, &dir.join("other"), None);
    c.check("a different seed gives a different run", bytes("first/final.cvc") != bytes("other/final.cvc"));
    c.finish();
}

// ---------------------------------------------------------------------------
// 5 and 6. Desk-scale runs

const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_ITERATIONS: u64 = 5000;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Variant {
    /// 2-1-2D generator, patch discriminators, two adversarial steps.
    Full,
    OneStep,
    OneD,
}

impl Variant {
    const ALL: [Variant; 3] = [Variant::Full, Variant::OneStep, Variant::OneD];

    fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OneStep => "one_step",
            Variant::OneD => "one_d",
        }
    }

    fn config(self, seed: u64) -> String {
        let (kind, steps) = match self {
            Variant::Full => ("2-1-2d", 2),
            Variant::OneStep => ("2-1-2d", 1),
            Variant::OneD => ("1d", 2),
        };
        format!(
            "iterations = {DESK_ITERATIONS}\nid_cutoff_iter = {DESK_ITERATIONS}\ncheckpoint_every = {DESK_ITERATIONS}\n\
             crop_frames = 64\ng_channel_divisor = 8\nd_channel_divisor = 32\nresidual_blocks = 3\n\
             generator_kind = {kind}\ndiscriminator_kind = patch\nadv_steps = {steps}\nseed = {seed}\n"
        )
    }
}

#[derive(Debug)]
struct DeskRun {
    variant: Variant,
    seed: u64,
    untrained_mcd: f64,
    untrained_msd: f64,
    mcd: f64,
    msd: f64,
    runtime: Duration,
    /// Cycle loss logged at iterations 100 and 2000.
    cyc_100: f64,
    cyc_2000: f64,
}

fn convert_and_score(ck: &Path, data: &Path, out: &Path) -> (f64, f64) {
    let opts = ConvertOptions {
        checkpoint: ck.into(),
        input: data.join("a/eval"),
        direction: Direction::Xy,
        out: out.into(),
        differential: false,
    };
    fs::create_dir_all(out).unwrap();
    cmd_convert(&opts).map_err(|f| f.error.to_string()).unwrap();
    let report = evaluate(out, &data.join("b/eval"), &data.join("eval_pairs.txt")).unwrap();
    (report.mcd.mean, report.msd.mean)
}

fn cyc_at(log: &str, iteration: u64) -> f64 {
    let row = log.lines().nth(iteration as usize - 1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0].parse::<u64>().unwrap(), iteration);
    fields[5].parse().unwrap()
}

fn desk_run(root: &Path, variant: Variant, seed: u64) -> DeskRun {
    let data = root.join(format!("data_{seed}"));
    let dir = root.join(format!("{}_{seed}", variant.name()));
    fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(&dir, "run.cfg", &data, &variant.config(seed));
    let opts = TrainOptions { config: cfg, out: Some(dir.join("out")), seed: None, resume: None };
    let prepared = prepare(&opts).unwrap();
    let untrained = dir.join("untrained.cvc");
    checkpoint::save(
        &untrained,
        &Checkpoint {
            state: prepared.state.clone(),
            stats_x: prepared.cx.stats().clone(),
            stats_y: prepared.cy.stats().clone(),
        },
    )
    .unwrap();
    let (untrained_mcd, untrained_msd) = convert_and_score(&untrained, &data, &dir.join("conv_untrained"));
    let start = Instant::now();
    execute(prepared).unwrap();
    let runtime = start.elapsed();
    let (mcd, msd) = convert_and_score(&dir.join("out").join(FINAL_CHECKPOINT), &data, &dir.join("conv"));
    let log = fs::read_to_string(dir.join("out").join(LOSS_FILE)).unwrap();
    let run = DeskRun {
        variant,
        seed,
        untrained_mcd,
        untrained_msd,
        mcd,
        msd,
        runtime,
        cyc_100: cyc_at(&log, 100),
        cyc_2000: cyc_at(&log, 2000),
    };
    let _ = writeln!(
        std::io::stderr(),
        "desk run {:>8} seed {seed}: MCD {:.3} -> {:.3}, MSD {:.3} -> {:.3}, cyc@100 {:.3}, cyc@2000 {:.3}, {:.0}s",
        variant.name(),
        run.untrained_mcd,
        run.mcd,
        run.untrained_msd,
        run.msd,
        run.cyc_100,
        run.cyc_2000,
        run.runtime.as_secs_f64()
    );
    run
}

fn desk_runs() -> &'static [DeskRun] {
    static RUNS: OnceLock<Vec<DeskRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let root = scratch("desk");
        let mut runs = Vec::new();
        for seed in DESK_SEEDS {
            cmd_synth(None, &root.join(format!("data_{seed}")), Some(seed)).unwrap();
            for v in Variant::ALL {
                runs.push(desk_run(&root, v, seed));
            }
        }
        runs
    })
}

fn mean_of(variant: Variant, f: impl Fn(&DeskRun) -> f64) -> f64 {
    let v: Vec<f64> = desk_runs().iter().filter(|r| r.variant == variant).map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_5_desk_scale_learning() {
    let _serial = serial();
    let mut c = Criterion::new(5, "trained MCD below 60% of untrained, mean over 3 seeds; each run within 30 min");
    let corpus = cyclevc_core::synth::SynthSpec::default();
    c.check(
        format!(
            "corpus: Q={}, T in {:?}, {} train sequences per speaker",
            corpus.q, corpus.t_range, corpus.n_train
        ),
        corpus.q == 20 && corpus.n_train == 40 && corpus.t_range.0 <= 160 && 160 <= corpus.t_range.1,
    );
    let untrained = mean_of(Variant::Full, |r| r.untrained_mcd);
    let trained = mean_of(Variant::Full, |r| r.mcd);
    for r in desk_runs().iter().filter(|r| r.variant == Variant::Full) {
        c.check(
            format!("seed {}: {:.0}s for {DESK_ITERATIONS} iterations", r.seed, r.runtime.as_secs_f64()),
            r.runtime <= Duration::from_secs(30 * 60),
        );
    }
    c.check(
        format!("mean MCD {trained:.3} vs untrained {untrained:.3} (ratio {:.3} < 0.6)", trained / untrained),
        trained < 0.6 * untrained,
    );
    c.finish();
}

#[test]
fn criterion_6_ablation_trend() {
    let _serial = serial();
    let mut c = Criterion::new(6, "two-step MSD <= one-step MSD; 2-1-2D MSD at least 20% below 1D, mean over 3 seeds");
    let full = mean_of(Variant::Full, |r| r.msd);
    let one_step = mean_of(Variant::OneStep, |r| r.msd);
    let one_d = mean_of(Variant::OneD, |r| r.msd);
    c.check(format!("(a) two-step MSD {full:.3} <= one-step MSD {one_step:.3}"), full <= one_step);
    c.check(
        format!("(b) 2-1-2D MSD {full:.3} <= 0.8 x 1D MSD {one_d:.3} (ratio {:.3})", full / one_d),
        full <= 0.8 * one_d,
    );
    c.finish();
}

/// Not a numbered criterion: the training module's toy-task expectation.
#[test]
fn cycle_loss_falls_on_the_synthetic_task() {
    let _serial = serial();
    let early = mean_of(Variant::Full, |r| r.cyc_100);
    let late = mean_of(Variant::Full, |r| r.cyc_2000);
    assert!(late < early, "cycle loss at 2000 ({late}) not below 100 ({early})");
}

// ---------------------------------------------------------------------------
// 7. Contract suite

fn receptive_field() -> usize {
    let (mut field, mut jump) = (1, 1);
    for (k, s) in [(3, 1), (3, 2), (3, 2), (3, 2), (3, 1)] {
        field += (k - 1) * jump;
        jump *= s;
    }
    field
}

#[test]
fn criterion_7_contract_suite() {
    let _serial = serial();
    let mut c = Criterion::new(7, "shapes, patch locality, identity cutoff, round trips, F0 statistics");
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);

    for kind in [GeneratorKind::OneD, GeneratorKind::TwoD, GeneratorKind::TwoOneTwoD] {
        let g = Generator::<f32>::build(GeneratorSpec::new(kind, 35), 1).unwrap();
        let ok = [16, 64, 128, 256].iter().all(|&t| {
            let y = g.apply(&random_seq(35, t, &mut rng)).unwrap();
            (y.q(), y.t()) == (35, t) && y.values().iter().all(|v| v.is_finite())
        });
        c.check(format!("{kind} generator keeps 35xT for T in 16, 64, 128, 256"), ok);
    }

    let (q, t) = (35, 128);
    let d = Discriminator::<f64>::build(DiscriminatorSpec::new(DiscriminatorKind::Patch, q, t), 2).unwrap();
    let x = random_seq(q, t, &mut rng);
    let patches = d.scores(&x).unwrap().len();
    c.check(format!("patch discriminator gives {patches} scores at 35x128"), patches > 1);
    let mut tape = Tape::new();
    tape.set_detach_norm_stats(true);
    let params = d.params.bind(&mut tape, false);
    let input = tape.leaf(to_grid(&[&x]).unwrap(), true);
    let out = d.forward(&mut tape, &params, input).unwrap();
    let os = tape.shape(out);
    let mut seed = vec![0.0; os.len()];
    seed[os.index(0, 0, os.h / 2, os.w / 2)] = 1.0;
    tape.backward_seeded(out, seed).unwrap();
    let g = tape.grad(input).unwrap();
    let cols: Vec<usize> = (0..t).filter(|&i| (0..q).any(|r| g[r * t + i] != 0.0)).collect();
    let span = cols.last().map_or(0, |l| l + 1 - cols[0]);
    c.check(
        format!("one patch sees {span} of {t} frames (field {})", receptive_field()),
        span > 0 && span <= receptive_field() && span < t,
    );

    let cfg = |lambda_id: f64| TrainingConfig {
        iterations: 20_000,
        crop_frames: 16,
        g_channel_divisor: 32,
        d_channel_divisor: 32,
        residual_blocks: 1,
        lambda_id,
        seed: 3,
        ..Default::default()
    };
    let (xs, ys) = (random_seq(5, 16, &mut rng), random_seq(5, 16, &mut rng));
    let step = |iteration: u64, lambda_id: f64| {
        let mut s = TrainState::new(cfg(lambda_id), 5).unwrap();
        s.iteration = iteration;
        let r = train_step(&mut s, &[xs.clone()], &[ys.clone()]).unwrap();
        (s, r)
    };
    let ((on, r_on), (off, _)) = (step(10_000, 5.0), step(10_000, 0.0));
    c.check(
        "identity term contributes no gradient at iteration 10^4",
        on.models == off.models && r_on.id == 0.0 && cfg(5.0).id_cutoff_iter == 10_000,
    );
    let ((on, r_on), (off, _)) = (step(9_999, 5.0), step(9_999, 0.0));
    c.check("identity term active at iteration 10^4 - 1", on.models.g_xy != off.models.g_xy && r_on.id > 0.0);

    let mut mcp_ok = true;
    for _ in 0..50 {
        let (q, t) = (rng.random_range(1..40), rng.random_range(1..300));
        let s = FeatureSequence::from_fn(q, t, |_, _| loop {
            let v = f32::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        })
        .unwrap();
        let back = mcp::decode(&mcp::encode(&s)).unwrap();
        let bits = |s: &FeatureSequence| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        mcp_ok &= (back.q(), back.t()) == (q, t) && bits(&back) == bits(&s);
    }
    c.check("feature files round trip bit-exactly (50 random, arbitrary finite bit patterns)", mcp_ok);

    let train_cfg = TrainingConfig { iterations: 3, crop_frames: 16, g_channel_divisor: 32, d_channel_divisor: 32, residual_blocks: 1, id_cutoff_iter: 2, ..Default::default() };
    let mut state = TrainState::new(train_cfg, 5).unwrap();
    train_step(&mut state, &[xs.clone()], &[ys.clone()]).unwrap();
    let stats = compute_stats(&[xs.clone(), ys.clone()]).unwrap();
    let ck = Checkpoint { state, stats_x: stats.clone(), stats_y: stats };
    let bytes = checkpoint::encode(&ck);
    let back = checkpoint::decode(&bytes).unwrap();
    c.check("checkpoint round trips bit-exactly", back == ck && checkpoint::encode(&back) == bytes);

    let mut f0_ok = true;
    for _ in 0..20 {
        let track: Vec<f32> = (0..rng.random_range(2..60)).map(|_| rng.random_range(70.0..350.0)).collect();
        let src = compute_logf0_stats(&[&track]).unwrap();
        let tgt = LogF0Stats { mean: rng.random_range(4.0..6.0), std: rng.random_range(0.05..0.4) };
        let conv: Vec<f64> = track.iter().map(|&f| convert_f0((f as f64).ln(), &src, &tgt).unwrap()).collect();
        let n = conv.len() as f64;
        let mean = conv.iter().sum::<f64>() / n;
        let std = (conv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        f0_ok &= (mean - tgt.mean).abs() < 1e-12 && (std - tgt.std).abs() < 1e-12;
        f0_ok &= convert_f0(src.mean, &src, &tgt).unwrap() == tgt.mean;
    }
    c.check("converted log F0 has exactly the target mean and deviation", f0_ok);
    c.finish();
}
