//! `convert`, `evaluate` and `gradcheck`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cyclevc_core::features::{differential_mceps, FeatureSequence};
use cyclevc_core::gradcheck::{run_suite, GradReport};
use cyclevc_core::metrics::{mcd_utterance, msd, summarize, MetricSummary};
use cyclevc_core::training::convert_utterance;

use crate::checkpoint;
use crate::error::{io_err, Error, Failure, Result, Stage};
use crate::manifest::{parse_pairing, resolve_pairs};
use crate::mcp::{read_features, write_features};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Xy,
    Yx,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(Self::Xy),
            "yx" => Ok(Self::Yx),
            other => Err(Error::Config(format!("direction must be xy or yx, got '{other}'"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Xy => "xy",
            Self::Yx => "yx",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub checkpoint: PathBuf,
    /// A feature file, or a directory whose `.mcp` files are all converted.
    pub input: PathBuf,
    pub direction: Direction,
    /// Output file for a file input, output directory for a directory input.
    pub out: PathBuf,
    pub differential: bool,
}

/// `name.mcp` -> `name.diff.mcp`, next to `path`.
pub fn differential_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.diff.mcp"))
}

fn is_feature_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    p.is_file() && name.ends_with(".mcp") && !name.ends_with(".diff.mcp")
}

/// Input/output path pairs for a convert job.
fn jobs(input: &Path, out: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(io_err(input))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_feature_file(p))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Config(format!("{} contains no .mcp files", input.display())));
        }
        Ok(files
            .into_iter()
            .map(|f| {
                let o = out.join(f.file_name().expect("listed file"));
                (f, o)
            })
            .collect())
    } else if input.is_file() {
        Ok(vec![(input.to_path_buf(), out.to_path_buf())])
    } else {
        Err(Error::Config(format!("input {} does not exist", input.display())))
    }
}

pub fn cmd_convert(opts: &ConvertOptions) -> Result<Vec<PathBuf>, Failure> {
    let ck = checkpoint::load(&opts.checkpoint).validation()?;
    let jobs = jobs(&opts.input, &opts.out).validation()?;
    let q = ck.state.q();
    let inputs = jobs
        .iter()
        .map(|(i, _)| {
            let x = read_features(i)?;
            if x.q() != q {
                return Err(Error::Config(format!(
                    "{}: Q = {} but the checkpoint was trained on Q = {q}",
                    i.display(),
                    x.q()
                )));
            }
            Ok(x)
        })
        .collect::<Result<Vec<FeatureSequence>>>()
        .validation()?;
    let models = &ck.state.models;
    let (generator, src, tgt) = match opts.direction {
        Direction::Xy => (&models.g_xy, &ck.stats_x, &ck.stats_y),
        Direction::Yx => (&models.g_yx, &ck.stats_y, &ck.stats_x),
    };
    let mut written = Vec::new();
    for ((input, output), x) in jobs.iter().zip(&inputs) {
        let y = convert_utterance(generator, src, tgt, x).runtime()?;
        write_features(output, &y).runtime()?;
        log::debug!("{} -> {}", input.display(), output.display());
        written.push(output.clone());
        if opts.differential {
            let d = differential_mceps(x, &y).runtime()?;
            let path = differential_path(output);
            write_features(&path, &d).runtime()?;
            written.push(path);
        }
    }
    log::info!("converted {} file(s) {}", jobs.len(), opts.direction);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub mcd: f64,
    pub msd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mcd: MetricSummary,
    pub msd: MetricSummary,
}

impl EvalReport {
    /// One `id,mcd,msd` row per pair, then `summary,mean±std,mean±std`.
    pub fn to_csv(&self) -> String {
        let mut s: String = self
            .rows
            .iter()
            .map(|r| format!("{},{},{}\n", r.id, r.mcd, r.msd))
            .collect();
        s.push_str(&format!(
            "summary,{}±{},{}±{}\n",
            self.mcd.mean, self.mcd.std, self.msd.mean, self.msd.std
        ));
        s
    }
}

pub fn evaluate(converted: &Path, target: &Path, pairing: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(pairing).map_err(io_err(pairing))?;
    let pairs = resolve_pairs(&parse_pairing(&text)?, converted, target)?;
    let loaded = pairs
        .iter()
        .map(|(c, t)| {
            let (a, b) = (read_features(c)?, read_features(t)?);
            if a.q() != b.q() {
                return Err(Error::Config(format!(
                    "{} has Q = {}, {} has Q = {}",
                    c.display(),
                    a.q(),
                    t.display(),
                    b.q()
                )));
            }
            Ok((c, a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(loaded.len());
    for (c, a, b) in &loaded {
        rows.push(EvalRow {
            id: c.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
            mcd: mcd_utterance(a, b)?,
            msd: msd(a, b)?,
        });
    }
    let mcd = summarize(&rows.iter().map(|r| r.mcd).collect::<Vec<_>>())?;
    let msd = summarize(&rows.iter().map(|r| r.msd).collect::<Vec<_>>())?;
    Ok(EvalReport { rows, mcd, msd })
}

pub fn cmd_evaluate(converted: &Path, target: &Path, pairing: &Path, out: Option<&Path>) -> Result<EvalReport, Failure> {
    for dir in [converted, target] {
        if !dir.is_dir() {
            return Err(Error::Config(format!("{} is not a directory", dir.display()))).validation();
        }
    }
    let report = evaluate(converted, target, pairing).validation()?;
    match out {
        Some(path) => fs::write(path, report.to_csv()).map_err(io_err(path)).runtime()?,
        None => print!("{}", report.to_csv()),
    }
    Ok(report)
}

pub const GRADCHECK_TOL: f64 = 1e-4;

pub fn format_gradcheck(reports: &[GradReport]) -> String {
    let mut s = format!("{:<18} {:>12} {:>7}  result\n", "op", "max_rel_err", "coords");
    for r in reports {
        s.push_str(&format!(
            "{:<18} {:>12.3e} {:>7}  {}\n",
            r.name,
            r.max_rel_err,
            r.coords,
            if r.passed(GRADCHECK_TOL) { "pass" } else { "FAIL" }
        ));
    }
    s
}

/// Prints the table; fails when any op misses the tolerance.
pub fn cmd_gradcheck(corrupt: Option<&str>) -> Result<Vec<GradReport>, Failure> {
    let reports = run_suite(0x5EED, corrupt).runtime()?;
    print!("{}", format_gradcheck(&reports));
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed(GRADCHECK_TOL))
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(Error::Config(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
        .runtime()
    }
}
