//! The `train` command: everything is validated before the first
//! iteration, then the loop appends one loss row per iteration and writes
//! periodic and final checkpoints.
//!
//! Output directory layout:
//!
//! ```text
//! run.cfg                 resolved configuration (reparses identically)
//! stats_x.txt stats_y.txt normalization statistics
//! loss.csv                iteration,adv_g,adv_d,adv2_g,adv2_d,cyc,id,total_g,total_d
//! checkpoints/iter_<n>.cvc every checkpoint_every iterations
//! final.cvc               after the last iteration
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cyclevc_core::losses::LossReport;
use cyclevc_core::training::{train, Corpus, TrainState};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{format_run, read_run, RunConfig};
use crate::error::{io_err, Error, Failure, Result, Stage};
use crate::manifest::{Manifest, Role};
use crate::stats::write_stats;

pub const RUN_FILE: &str = "run.cfg";
pub const LOSS_FILE: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.cvc";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Checkpoint to resume from.
    pub resume: Option<PathBuf>,
}

/// A validated run, ready to start.
pub struct Prepared {
    pub run: RunConfig,
    pub out_dir: PathBuf,
    pub cx: Corpus,
    pub cy: Corpus,
    pub state: TrainState,
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("iter_{iteration:08}.cvc")
}

pub fn format_loss_row(iteration: u64, r: &LossReport) -> String {
    let mut s = iteration.to_string();
    for (_, v) in r.fields() {
        s.push(',');
        s.push_str(&v.to_string());
    }
    s
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(io_err(p))
}

fn load_corpus(path: &Path, speaker: &str) -> Result<Vec<cyclevc_core::features::FeatureSequence>> {
    Manifest::load(path, speaker, Role::Train)?.read_all()
}

/// Parses, loads and checks everything a run needs.
pub fn prepare(opts: &TrainOptions) -> Result<Prepared> {
    let mut run = read_run(&opts.config)?;
    if let Some(seed) = opts.seed {
        run.training.seed = seed;
    }
    if let Some(out) = &opts.out {
        run.out_dir = Some(out.clone());
    }
    let out_dir = run
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: set out_dir or pass --out".into()))?;
    run.manifest_x = absolute(&run.manifest_x)?;
    run.manifest_y = absolute(&run.manifest_y)?;
    let out_dir = absolute(&out_dir)?;
    run.out_dir = Some(out_dir.clone());

    let raw_x = load_corpus(&run.manifest_x, "X")?;
    let raw_y = load_corpus(&run.manifest_y, "Y")?;
    let (qx, qy) = (raw_x[0].q(), raw_y[0].q());
    if qx != qy {
        return Err(Error::Config(format!(
            "Q mismatch between speakers: X has {qx}, Y has {qy}"
        )));
    }
    let crop = run.training.crop_frames;
    for (who, raw) in [("X", &raw_x), ("Y", &raw_y)] {
        if raw.iter().all(|s| s.t() < crop) {
            return Err(Error::Config(format!(
                "speaker {who}: no training file has the {crop} frames a crop needs"
            )));
        }
    }
    let cx = Corpus::from_raw(&raw_x)?;
    let cy = Corpus::from_raw(&raw_y)?;
    let state = match &opts.resume {
        None => TrainState::new(run.training.clone(), qx)?,
        Some(path) => {
            let ck = checkpoint::load(path)?;
            checkpoint::check_architecture(&ck, &run.training, qx)?;
            if ck.stats_x != *cx.stats() || ck.stats_y != *cy.stats() {
                return Err(Error::Config(format!(
                    "{}: statistics differ from the configured training data",
                    path.display()
                )));
            }
            if ck.state.iteration > run.training.iterations {
                return Err(Error::Config(format!(
                    "{}: checkpoint is at iteration {}, past the configured {}",
                    path.display(),
                    ck.state.iteration,
                    run.training.iterations
                )));
            }
            let s = ck.state;
            TrainState::from_parts(run.training.clone(), s.models, s.moments, s.rng, s.iteration)?
        }
    };
    Ok(Prepared {
        run,
        out_dir,
        cx,
        cy,
        state,
    })
}

/// Keeps the rows of an existing loss log up to `iteration`.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_err(path)(e)),
    };
    let kept: String = text
        .lines()
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|n| n.parse::<u64>().ok())
                .is_some_and(|n| n <= iteration)
        })
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(path, kept).map_err(io_err(path))
}

/// Runs a prepared job to completion; returns the final state.
pub fn execute(p: Prepared) -> Result<TrainState> {
    let Prepared {
        run,
        out_dir,
        cx,
        cy,
        mut state,
    } = p;
    let dir = &out_dir;
    fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
    fs::write(dir.join(RUN_FILE), format_run(&run)).map_err(io_err(dir.join(RUN_FILE)))?;
    write_stats(&dir.join("stats_x.txt"), cx.stats())?;
    write_stats(&dir.join("stats_y.txt"), cy.stats())?;
    let log_path = dir.join(LOSS_FILE);
    let start = state.iteration;
    if start == 0 {
        File::create(&log_path).map_err(io_err(&log_path))?;
    } else {
        truncate_log(&log_path, start)?;
    }
    let mut log = BufWriter::new(
        OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?,
    );
    let every = run.training.checkpoint_every;
    let total = run.training.iterations;
    log::info!(
        "training {} from iteration {start} to {total}; {}",
        dir.display(),
        state.models.describe()
    );
    let snapshot = |s: &TrainState| Checkpoint {
        state: s.clone(),
        stats_x: cx.stats().clone(),
        stats_y: cy.stats().clone(),
    };
    train(&mut state, &cx, &cy, |s: &TrainState, r: &LossReport| -> Result<()> {
        writeln!(log, "{}", format_loss_row(s.iteration, r)).map_err(io_err(&log_path))?;
        if s.iteration % every == 0 {
            log.flush().map_err(io_err(&log_path))?;
            let path = dir.join("checkpoints").join(checkpoint_name(s.iteration));
            checkpoint::save(&path, &snapshot(s))?;
            log::info!("checkpoint {}", path.display());
        }
        if s.iteration % 100 == 0 || log::log_enabled!(log::Level::Debug) {
            let level = if s.iteration % 100 == 0 { log::Level::Info } else { log::Level::Debug };
            log::log!(
                level,
                "iter {} total_g {:.4} total_d {:.4} cyc {:.4}",
                s.iteration,
                r.total_g,
                r.total_d,
                r.cyc
            );
        }
        Ok(())
    })?;
    log.flush().map_err(io_err(&log_path))?;
    checkpoint::save(&dir.join(FINAL_CHECKPOINT), &snapshot(&state))?;
    log::info!("done: {}", dir.join(FINAL_CHECKPOINT).display());
    Ok(state)
}

/// Validation failures exit 1, failures while training exit 2.
pub fn cmd_train(opts: &TrainOptions) -> Result<TrainState, Failure> {
    let prepared = prepare(opts).validation()?;
    execute(prepared).runtime()
}
