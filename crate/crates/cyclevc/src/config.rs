//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key may appear at most
//! once; unknown keys are errors. Absent training keys take the
//! [`TrainingConfig`] defaults. Relative paths resolve against the
//! directory of the file that names them.
//!
//! [`format_run`] writes every key, so its output reparses to an identical
//! [`RunConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cyclevc_core::models::{DiscriminatorKind, GeneratorKind};
use cyclevc_core::training::TrainingConfig;

use crate::error::{io_err, Error, Result};

/// Training keys, in echo order.
pub const TRAINING_KEYS: [&str; 17] = [
    "iterations",
    "lr_g",
    "lr_d",
    "beta1",
    "batch_size",
    "crop_frames",
    "lambda_cyc",
    "lambda_id",
    "id_cutoff_iter",
    "adv_steps",
    "generator_kind",
    "discriminator_kind",
    "seed",
    "g_channel_divisor",
    "d_channel_divisor",
    "residual_blocks",
    "checkpoint_every",
];

pub const PATH_KEYS: [&str; 3] = ["manifest_x", "manifest_y", "out_dir"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub training: TrainingConfig,
    /// Training manifest of the source speaker X.
    pub manifest_x: PathBuf,
    /// Training manifest of the target speaker Y.
    pub manifest_y: PathBuf,
    /// Absent when the command line supplies `--out`.
    pub out_dir: Option<PathBuf>,
}

/// `key -> (line number, value)` for one file.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {n}: expected key = value, got '{line}'")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {n}: empty key")));
        }
        if let Some((first, _)) = out.get(&key) {
            return Err(Error::Config(format!("line {n}: key '{key}' already set on line {first}")));
        }
        out.insert(key, (n, value.trim().to_string()));
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(key: &str, (line, v): &(usize, String)) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("line {line}: {key} = '{v}': {e}")))
}

/// Applies training keys from `pairs` over the defaults, consuming them.
fn take_training(pairs: &mut BTreeMap<String, (usize, String)>) -> Result<TrainingConfig> {
    let mut c = TrainingConfig::default();
    for key in TRAINING_KEYS {
        let Some(entry) = pairs.remove(key) else { continue };
        match key {
            "iterations" => c.iterations = value(key, &entry)?,
            "lr_g" => c.lr_g = value(key, &entry)?,
            "lr_d" => c.lr_d = value(key, &entry)?,
            "beta1" => c.beta1 = value(key, &entry)?,
            "batch_size" => c.batch_size = value(key, &entry)?,
            "crop_frames" => c.crop_frames = value(key, &entry)?,
            "lambda_cyc" => c.lambda_cyc = value(key, &entry)?,
            "lambda_id" => c.lambda_id = value(key, &entry)?,
            "id_cutoff_iter" => c.id_cutoff_iter = value(key, &entry)?,
            "adv_steps" => {
                c.adv_steps = value(key, &entry)?;
                if !matches!(c.adv_steps, 1 | 2) {
                    return Err(Error::Config(format!(
                        "line {}: adv_steps must be 1 or 2, got {}",
                        entry.0, c.adv_steps
                    )));
                }
            }
            "generator_kind" => c.generator_kind = value::<GeneratorKind>(key, &entry)?,
            "discriminator_kind" => c.discriminator_kind = value::<DiscriminatorKind>(key, &entry)?,
            "seed" => c.seed = value(key, &entry)?,
            "g_channel_divisor" => c.g_channel_divisor = value(key, &entry)?,
            "d_channel_divisor" => c.d_channel_divisor = value(key, &entry)?,
            "residual_blocks" => c.residual_blocks = value(key, &entry)?,
            "checkpoint_every" => c.checkpoint_every = value(key, &entry)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    Ok(c)
}

fn reject_unknown(pairs: &BTreeMap<String, (usize, String)>) -> Result<()> {
    match pairs.iter().min_by_key(|(_, (line, _))| *line) {
        Some((key, (line, _))) => Err(Error::Config(format!("line {line}: unknown key '{key}'"))),
        None => Ok(()),
    }
}

/// Training keys only, as stored in checkpoints.
pub fn parse_training(text: &str) -> Result<TrainingConfig> {
    let mut pairs = parse_pairs(text)?;
    let c = take_training(&mut pairs)?;
    reject_unknown(&pairs)?;
    c.validate()?;
    Ok(c)
}

pub fn format_training(c: &TrainingConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    put("iterations", c.iterations.to_string());
    put("lr_g", format!("{:?}", c.lr_g));
    put("lr_d", format!("{:?}", c.lr_d));
    put("beta1", format!("{:?}", c.beta1));
    put("batch_size", c.batch_size.to_string());
    put("crop_frames", c.crop_frames.to_string());
    put("lambda_cyc", format!("{:?}", c.lambda_cyc));
    put("lambda_id", format!("{:?}", c.lambda_id));
    put("id_cutoff_iter", c.id_cutoff_iter.to_string());
    put("adv_steps", c.adv_steps.to_string());
    put("generator_kind", c.generator_kind.to_string());
    put("discriminator_kind", c.discriminator_kind.to_string());
    put("seed", c.seed.to_string());
    put("g_channel_divisor", c.g_channel_divisor.to_string());
    put("d_channel_divisor", c.d_channel_divisor.to_string());
    put("residual_blocks", c.residual_blocks.to_string());
    put("checkpoint_every", c.checkpoint_every.to_string());
    s
}

/// Parses a run configuration; relative paths resolve against `base`.
pub fn parse_run(text: &str, base: &Path) -> Result<RunConfig> {
    let mut pairs = parse_pairs(text)?;
    let training = take_training(&mut pairs)?;
    let mut path = |key: &str| pairs.remove(key).map(|(_, v)| base.join(v));
    let manifest_x = path("manifest_x");
    let manifest_y = path("manifest_y");
    let out_dir = path("out_dir");
    reject_unknown(&pairs)?;
    let missing = |k: &str| Error::Config(format!("missing manifest: key '{k}' is required"));
    let run = RunConfig {
        training,
        manifest_x: manifest_x.ok_or_else(|| missing("manifest_x"))?,
        manifest_y: manifest_y.ok_or_else(|| missing("manifest_y"))?,
        out_dir,
    };
    run.training.validate()?;
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_run(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Full echo of `run`; paths are written as given, so absolute inputs
/// reparse identically from any directory.
pub fn format_run(run: &RunConfig) -> String {
    let mut s = format_training(&run.training);
    s.push_str(&format!("manifest_x = {}\n", run.manifest_x.display()));
    s.push_str(&format!("manifest_y = {}\n", run.manifest_y.display()));
    if let Some(out) = &run.out_dir {
        s.push_str(&format!("out_dir = {}\n", out.display()));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_absent_keys() {
        let run = parse_run("manifest_x = a.txt\nmanifest_y = b.txt # comment\n", Path::new("/d")).unwrap();
        assert_eq!(run.training, TrainingConfig::default());
        assert_eq!(run.manifest_x, PathBuf::from("/d/a.txt"));
        assert_eq!(run.out_dir, None);
    }

    #[test]
    fn diagnostics_are_distinct() {
        let base = Path::new("/");
        let e = parse_run("manifest_x = a\nmanifest_y = b\nadv_steps = 3\n", base).unwrap_err();
        assert!(e.to_string().contains("adv_steps must be 1 or 2"), "{e}");
        let e = parse_run("manifest_x = a\nmanifest_y = b\nlearning_rate = 1\n", base).unwrap_err();
        assert!(e.to_string().contains("unknown key 'learning_rate'"), "{e}");
        let e = parse_run("manifest_x = a\n", base).unwrap_err();
        assert!(e.to_string().contains("missing manifest"), "{e}");
        let e = parse_run("manifest_x = a\nmanifest_x = b\n", base).unwrap_err();
        assert!(e.to_string().contains("already set"), "{e}");
        let e = parse_run("manifest_x = a\nmanifest_y = b\ncrop_frames = 30\n", base).unwrap_err();
        assert!(e.to_string().contains("multiple of 4"), "{e}");
    }

    #[test]
    fn training_block_round_trips() {
        let c = TrainingConfig {
            lr_g: 1.0 / 3.0,
            adv_steps: 1,
            generator_kind: GeneratorKind::OneD,
            discriminator_kind: DiscriminatorKind::Full,
            ..Default::default()
        };
        assert_eq!(parse_training(&format_training(&c)).unwrap(), c);
    }
}
