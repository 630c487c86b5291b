//! Plain-text normalization statistics.
//!
//! ```text
//! q 35
//! mcep_mean <q values>
//! mcep_std <q values>
//! logf0_mean <value>     (optional, together with logf0_std)
//! logf0_std <value>
//! ```
//!
//! Values are written in shortest round-trip form, so a file reparses to
//! bit-identical statistics.

use std::fs;
use std::path::Path;

use cyclevc_core::features::{LogF0Stats, NormStats};

use crate::error::{io_err, Error, Result};

pub fn format_stats(s: &NormStats) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut out = format!(
        "q {}\nmcep_mean {}\nmcep_std {}\n",
        s.q(),
        join(&s.mcep_mean),
        join(&s.mcep_std)
    );
    if let Some(f0) = &s.logf0 {
        out.push_str(&format!("logf0_mean {:?}\nlogf0_std {:?}\n", f0.mean, f0.std));
    }
    out
}

pub fn parse_stats(text: &str) -> Result<NormStats> {
    let mut q = None;
    let (mut mean, mut std) = (None, None);
    let (mut f0_mean, mut f0_std) = (None, None);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let nums = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Config(format!("stats line {}: '{p}' is not a number", n + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let single = |v: &[f64]| -> Result<f64> {
            match v {
                [x] => Ok(*x),
                _ => Err(Error::Config(format!("stats line {}: {key} takes one value", n + 1))),
            }
        };
        match key {
            "q" => q = Some(single(&nums)? as usize),
            "mcep_mean" => mean = Some(nums),
            "mcep_std" => std = Some(nums),
            "logf0_mean" => f0_mean = Some(single(&nums)?),
            "logf0_std" => f0_std = Some(single(&nums)?),
            other => return Err(Error::Config(format!("stats line {}: unknown label '{other}'", n + 1))),
        }
    }
    let missing = |what: &str| Error::Config(format!("stats: missing {what}"));
    let q = q.ok_or_else(|| missing("q"))?;
    let s = NormStats {
        mcep_mean: mean.ok_or_else(|| missing("mcep_mean"))?,
        mcep_std: std.ok_or_else(|| missing("mcep_std"))?,
        logf0: match (f0_mean, f0_std) {
            (Some(mean), Some(std)) => Some(LogF0Stats { mean, std }),
            (None, None) => None,
            _ => return Err(missing("one of logf0_mean / logf0_std")),
        },
    };
    if s.mcep_mean.len() != q || s.mcep_std.len() != q {
        return Err(Error::Config(format!(
            "stats: q is {q} but the vectors have {} and {} values",
            s.mcep_mean.len(),
            s.mcep_std.len()
        )));
    }
    s.validate()?;
    Ok(s)
}

pub fn read_stats(path: &Path) -> Result<NormStats> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_stats(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_stats(path: &Path, s: &NormStats) -> Result<()> {
    fs::write(path, format_stats(s)).map_err(io_err(path))
}
