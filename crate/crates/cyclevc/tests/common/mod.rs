#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_SYNTH: &str = "seed = 3\nn_train = 4\nn_eval = 2\nq = 6\nt_min = 40\nt_max = 48\n";

pub fn tiny_run_config(iterations: u64, extra: &str) -> String {
    format!(
        "iterations = {iterations}\ncrop_frames = 16\ng_channel_divisor = 32\nd_channel_divisor = 32\n\
         residual_blocks = 1\nid_cutoff_iter = {}\ncheckpoint_every = 50\nseed = 1\n\
         manifest_x = data/a_train.txt\nmanifest_y = data/b_train.txt\n{extra}",
        iterations / 2
    )
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cyclevc"));
    c.env("CYCLEVC_LOG", "quiet");
    c
}

pub fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn cyclevc")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A temp dir holding `data/` (tiny synthetic corpus) and `run.cfg`.
pub fn workspace(iterations: u64, extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.cfg"), TINY_SYNTH).unwrap();
    let o = run(&["synth", "--config", "synth.cfg", "--out", "data"], dir.path());
    assert!(o.status.success(), "synth failed: {}", stderr(&o));
    fs::write(dir.path().join("run.cfg"), tiny_run_config(iterations, extra)).unwrap();
    dir
}

pub fn p(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}
