//! The `synth` command: a two-speaker corpus, its manifests and the exact
//! source-to-target map.
//!
//! The spec file is flat `key = value`; every key is optional:
//!
//! ```text
//! seed n_train n_eval q t_min t_max
//! a_fir_prev a_fir_next a_max_angle a_scale_min a_scale_max a_offset_min a_offset_max
//! b_fir_prev ... (same keys for speaker b)
//! ```
//!
//! Output layout under the target directory:
//!
//! ```text
//! synth.cfg                  resolved spec
//! a/train/train_NNN.mcp      a/eval/eval_NNN.mcp
//! b/train/train_NNN.mcp      b/eval/eval_NNN.mcp
//! a_train.txt a_eval.txt b_train.txt b_eval.txt   manifests
//! eval_pairs.txt             pairing of converted a/eval names to b/eval
//! ground_truth.txt           both transforms; the map is b ∘ a⁻¹
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cyclevc_core::features::FeatureSequence;
use cyclevc_core::synth::{generate, ground_truth_map, SpeakerParams, SpeakerTransform, SynthCorpus, SynthSpec};

use crate::config::parse_pairs;
use crate::error::{io_err, Error, Failure, Result, Stage};
use crate::mcp::write_features;

pub const SPEC_FILE: &str = "synth.cfg";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const PAIRS_FILE: &str = "eval_pairs.txt";

const SPEAKER_KEYS: [&str; 7] = [
    "fir_prev",
    "fir_next",
    "max_angle",
    "scale_min",
    "scale_max",
    "offset_min",
    "offset_max",
];

pub fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let mut pairs = parse_pairs(text)?;
    let mut spec = SynthSpec::default();
    macro_rules! take {
        ($key:expr, $slot:expr) => {
            if let Some((line, v)) = pairs.remove($key) {
                $slot = v
                    .parse()
                    .map_err(|e| Error::Config(format!("line {line}: {} = '{v}': {e}", $key)))?;
            }
        };
    }
    take!("seed", spec.seed);
    take!("n_train", spec.n_train);
    take!("n_eval", spec.n_eval);
    take!("q", spec.q);
    take!("t_min", spec.t_range.0);
    take!("t_max", spec.t_range.1);
    for (who, p) in [("a", &mut spec.speaker_a), ("b", &mut spec.speaker_b)] {
        let k = |s: &str| format!("{who}_{s}");
        take!(&k("fir_prev"), p.fir.0);
        take!(&k("fir_next"), p.fir.1);
        take!(&k("max_angle"), p.max_angle);
        take!(&k("scale_min"), p.scale_range.0);
        take!(&k("scale_max"), p.scale_range.1);
        take!(&k("offset_min"), p.offset_range.0);
        take!(&k("offset_max"), p.offset_range.1);
    }
    if let Some((key, (line, _))) = pairs.iter().min_by_key(|(_, (l, _))| *l) {
        return Err(Error::Config(format!("line {line}: unknown synth key '{key}'")));
    }
    spec.validate()?;
    Ok(spec)
}

pub fn format_synth_spec(s: &SynthSpec) -> String {
    let mut out = format!(
        "seed = {}\nn_train = {}\nn_eval = {}\nq = {}\nt_min = {}\nt_max = {}\n",
        s.seed, s.n_train, s.n_eval, s.q, s.t_range.0, s.t_range.1
    );
    for (who, p) in [("a", &s.speaker_a), ("b", &s.speaker_b)] {
        let values = speaker_values(p);
        for (k, v) in SPEAKER_KEYS.iter().zip(values) {
            let _ = writeln!(out, "{who}_{k} = {v:?}");
        }
    }
    out
}

fn speaker_values(p: &SpeakerParams) -> [f64; 7] {
    [
        p.fir.0,
        p.fir.1,
        p.max_angle,
        p.scale_range.0,
        p.scale_range.1,
        p.offset_range.0,
        p.offset_range.1,
    ]
}

/// Both drawn transforms. Converting speaker a to speaker b is
/// `b.apply(a.invert(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a: SpeakerTransform,
    pub b: SpeakerTransform,
}

impl GroundTruth {
    pub fn map(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        Ok(ground_truth_map(&self.a, &self.b, x)?)
    }
}

/// Line format, one record per line, floats in round-trip notation:
///
/// ```text
/// q <Q>
/// <s> fir <prev> <next>
/// <s> scale <Q values>
/// <s> offset <Q values>
/// <s> rotation <i> <j> <angle>     (in application order)
/// ```
pub fn format_ground_truth(g: &GroundTruth) -> String {
    let mut out = format!("q {}\n", g.a.q());
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    for (who, t) in [("a", &g.a), ("b", &g.b)] {
        let _ = writeln!(out, "{who} fir {:?} {:?}", t.fir.0, t.fir.1);
        let _ = writeln!(out, "{who} scale {}", join(&t.scale));
        let _ = writeln!(out, "{who} offset {}", join(&t.offset));
        for (i, j, a) in &t.rotations {
            let _ = writeln!(out, "{who} rotation {i} {j} {a:?}");
        }
    }
    out
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let bad = |n: usize, why: &str| Error::Config(format!("ground truth line {n}: {why}"));
    let mut q = None;
    let empty = || SpeakerTransform {
        fir: (0.0, 0.0),
        rotations: Vec::new(),
        scale: Vec::new(),
        offset: Vec::new(),
    };
    let (mut a, mut b) = (empty(), empty());
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let floats = |xs: &[&str]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(n, &format!("'{s}': {e}"))))
                .collect()
        };
        match parts.as_slice() {
            [] => {}
            ["q", v] => q = Some(v.parse::<usize>().map_err(|e| bad(n, &e.to_string()))?),
            [who, field, rest @ ..] => {
                let t = match *who {
                    "a" => &mut a,
                    "b" => &mut b,
                    _ => return Err(bad(n, &format!("unknown speaker '{who}'"))),
                };
                match (*field, rest) {
                    ("fir", [p, x]) => {
                        let v = floats(&[p, x])?;
                        t.fir = (v[0], v[1]);
                    }
                    ("scale", xs) => t.scale = floats(xs)?,
                    ("offset", xs) => t.offset = floats(xs)?,
                    ("rotation", [i, j, angle]) => {
                        let idx = |s: &str| s.parse::<usize>().map_err(|e| bad(n, &e.to_string()));
                        t.rotations.push((idx(i)?, idx(j)?, floats(&[angle])?[0]));
                    }
                    _ => return Err(bad(n, &format!("unrecognised record '{line}'"))),
                }
            }
            _ => return Err(bad(n, &format!("unrecognised record '{line}'"))),
        }
    }
    let q = q.ok_or_else(|| Error::Config("ground truth: missing 'q' record".into()))?;
    for (who, t) in [("a", &a), ("b", &b)] {
        if t.scale.len() != q || t.offset.len() != q {
            return Err(Error::Config(format!(
                "ground truth: speaker {who} needs {q} scale and offset values"
            )));
        }
        if t.scale.iter().any(|s| *s == 0.0) {
            return Err(Error::Config(format!("ground truth: speaker {who} has a zero scale")));
        }
        if t.rotations.iter().any(|&(i, j, _)| i >= q || j >= q || i == j) {
            return Err(Error::Config(format!("ground truth: speaker {who} has a bad rotation index")));
        }
    }
    Ok(GroundTruth { a, b })
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Paths of everything `synth` wrote.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub corpus: SynthCorpus,
}

impl SynthOutput {
    pub fn manifest(&self, speaker: &str, role: &str) -> PathBuf {
        self.dir.join(format!("{speaker}_{role}.txt"))
    }

    pub fn eval_dir(&self, speaker: &str) -> PathBuf {
        self.dir.join(speaker).join("eval")
    }

    pub fn pairs(&self) -> PathBuf {
        self.dir.join(PAIRS_FILE)
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.dir.join(GROUND_TRUTH_FILE)
    }
}

pub fn eval_name(i: usize) -> String {
    format!("eval_{i:03}.mcp")
}

fn write_set(dir: &Path, speaker: &str, role: &str, seqs: &[FeatureSequence]) -> Result<()> {
    let mut listing = String::new();
    for (i, s) in seqs.iter().enumerate() {
        let rel = format!("{speaker}/{role}/{role}_{i:03}.mcp");
        write_features(&dir.join(&rel), s)?;
        listing.push_str(&rel);
        listing.push('\n');
    }
    let manifest = dir.join(format!("{speaker}_{role}.txt"));
    fs::write(&manifest, listing).map_err(io_err(&manifest))
}

/// Generates and writes a corpus for an already parsed spec.
pub fn synthesize(spec: &SynthSpec, dir: &Path) -> Result<SynthOutput> {
    let corpus = generate(spec)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))
    };
    put(SPEC_FILE, format_synth_spec(spec))?;
    write_set(dir, "a", "train", &corpus.train_a)?;
    write_set(dir, "b", "train", &corpus.train_b)?;
    write_set(dir, "a", "eval", &corpus.eval_a)?;
    write_set(dir, "b", "eval", &corpus.eval_b)?;
    put(PAIRS_FILE, (0..spec.n_eval).map(|i| eval_name(i) + "\n").collect())?;
    put(
        GROUND_TRUTH_FILE,
        format_ground_truth(&GroundTruth {
            a: corpus.transform_a.clone(),
            b: corpus.transform_b.clone(),
        }),
    )?;
    log::info!(
        "synthesized {} train and {} eval files per speaker in {}",
        spec.n_train,
        spec.n_eval,
        dir.display()
    );
    Ok(SynthOutput {
        dir: dir.to_path_buf(),
        corpus,
    })
}

/// `spec` of `None` uses the defaults.
pub fn cmd_synth(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<SynthOutput, Failure> {
    let mut parsed = match spec {
        Some(p) => fs::read_to_string(p)
            .map_err(io_err(p))
            .and_then(|t| parse_synth_spec(&t))
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                e => e,
            })
            .validation()?,
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        parsed.seed = s;
    }
    synthesize(&parsed, out).runtime()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips() {
        let s = SynthSpec {
            seed: 9,
            q: 6,
            t_range: (30, 41),
            ..Default::default()
        };
        assert_eq!(parse_synth_spec(&format_synth_spec(&s)).unwrap(), s);
        assert!(parse_synth_spec("a_fir_prev = 0.6\na_fir_next = 0.5\n").is_err());
        assert!(parse_synth_spec("colour = 1\n").unwrap_err().to_string().contains("unknown"));
    }

    #[test]
    fn ground_truth_round_trips() {
        let c = generate(&SynthSpec {
            n_train: 1,
            n_eval: 1,
            q: 5,
            t_range: (20, 20),
            ..Default::default()
        })
        .unwrap();
        let g = GroundTruth {
            a: c.transform_a,
            b: c.transform_b,
        };
        assert_eq!(parse_ground_truth(&format_ground_truth(&g)).unwrap(), g);
        assert!(parse_ground_truth("a fir 0 0\n").is_err());
    }
}
