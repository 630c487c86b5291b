mod common;

use std::fs;

use common::*;
use cyclevc::checkpoint;
use cyclevc::train::{cmd_train, TrainOptions};
use cyclevc::Error;

#[test]
fn resuming_reproduces_the_uninterrupted_run() {
    let ws = workspace(100, "");
    let d = ws.path();
    let o = run(&["train", "--config", "run.cfg", "--out", "full"], d);
    assert!(o.status.success(), "{}", stderr(&o));

    // A second run is cut short by resuming from the midpoint into a fresh dir.
    fs::create_dir(p(d, "resumed")).unwrap();
    let log = fs::read_to_string(p(d, "full/loss.csv")).unwrap();
    let head: String = log.lines().take(50).map(|l| format!("{l}\n")).collect();
    let tail: String = log.lines().skip(50).map(|l| format!("{l}\n")).collect();
    fs::write(p(d, "resumed/loss.csv"), format!("{head}999,stale\n")).unwrap();
    let o = run(
        &["train", "--config", "run.cfg", "--out", "resumed", "--checkpoint", "full/checkpoints/iter_00000050.cvc"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(p(d, "full/final.cvc")).unwrap(), fs::read(p(d, "resumed/final.cvc")).unwrap());
    let resumed = fs::read_to_string(p(d, "resumed/loss.csv")).unwrap();
    assert_eq!(resumed, format!("{head}{tail}"));
    assert_eq!(
        fs::read(p(d, "full/checkpoints/iter_00000100.cvc")).unwrap(),
        fs::read(p(d, "resumed/checkpoints/iter_00000100.cvc")).unwrap()
    );
}

#[test]
fn truncated_checkpoint_is_reported_as_corrupt() {
    let ws = workspace(50, "");
    let d = ws.path();
    assert!(run(&["train", "--config", "run.cfg", "--out", "out"], d).status.success());
    let bytes = fs::read(p(d, "out/final.cvc")).unwrap();
    fs::write(p(d, "cut.cvc"), &bytes[..bytes.len() * 2 / 3]).unwrap();
    let err = checkpoint::load(&p(d, "cut.cvc")).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    let o = run(&["train", "--config", "run.cfg", "--out", "again", "--checkpoint", "cut.cvc"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cut.cvc"), "{}", stderr(&o));
    let o = run(&["convert", "--checkpoint", "cut.cvc", "--direction", "xy", "--out", "c", "data/a/eval"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn patch_checkpoint_does_not_load_into_a_full_discriminator_run() {
    let ws = workspace(50, "");
    let d = ws.path();
    assert!(run(&["train", "--config", "run.cfg", "--out", "out"], d).status.success());
    fs::write(p(d, "full.cfg"), tiny_run_config(50, "discriminator_kind = full\n")).unwrap();
    let opts = TrainOptions {
        config: p(d, "full.cfg"),
        out: Some(p(d, "never")),
        seed: None,
        resume: Some(p(d, "out/checkpoints/iter_00000050.cvc")),
    };
    let failure = cmd_train(&opts).unwrap_err();
    assert_eq!(failure.code, 1);
    match failure.error {
        Error::ArchitectureMismatch(m) => assert!(m.contains("discriminator_kind"), "{m}"),
        e => panic!("unexpected {e}"),
    }
    assert!(!p(d, "never").exists());
}

#[test]
fn resuming_past_the_configured_end_is_rejected() {
    let ws = workspace(50, "");
    let d = ws.path();
    assert!(run(&["train", "--config", "run.cfg", "--out", "out"], d).status.success());
    fs::write(p(d, "short.cfg"), tiny_run_config(50, "").replace("iterations = 50", "iterations = 40")).unwrap();
    let o = run(&["train", "--config", "short.cfg", "--out", "x", "--checkpoint", "out/final.cvc"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("past the configured"), "{}", stderr(&o));
}
