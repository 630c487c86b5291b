//! "CVC2" checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "CVC2" | u32 version
//! u32 len + UTF-8   training configuration (key = value text)
//! u64               completed iterations
//! [u8; 32] | u64 | u128   crop RNG seed, stream, word position
//! u32 len + UTF-8   statistics of speaker X (stats text format)
//! u32 len + UTF-8   statistics of speaker Y
//! u32               array count, then per array:
//!     u32 len + UTF-8 name | u32 n, c, h, w | n·c·h·w f32 values
//! u32               CRC-32 of every preceding byte
//! ```
//!
//! Array names are `<network>/<parameter>` for weights and
//! `adam.m/<network>/<parameter>`, `adam.v/...` for optimizer moments.

use std::fs;
use std::path::Path;

use cyclevc_core::features::NormStats;
use cyclevc_core::models::ParamSet;
use cyclevc_core::optim::Moments;
use cyclevc_core::training::{RngState, TrainState, TrainingConfig};
use cyclevc_core::Shape;

use crate::config::{format_training, parse_training};
use crate::error::{io_err, Error, FormatError, Result};
use crate::stats::{format_stats, parse_stats};

pub const MAGIC: [u8; 4] = *b"CVC2";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub stats_x: NormStats,
    pub stats_y: NormStats,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn text(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn array(&mut self, name: &str, shape: Shape, data: &[f32]) {
        self.text(name);
        for d in [shape.n, shape.c, shape.h, shape.w] {
            self.u32(d as u32);
        }
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            FormatError::Corrupt(format!(
                "truncated: needs {n} bytes at offset {}, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u128(&mut self) -> Result<u128, FormatError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }

    fn text(&mut self) -> Result<&'a str, FormatError> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| FormatError::Corrupt("text block is not UTF-8".into()))
    }

    fn array(&mut self) -> Result<(&'a str, Shape, Vec<f32>), FormatError> {
        let name = self.text()?;
        let mut d = [0usize; 4];
        for slot in &mut d {
            *slot = self.u32()? as usize;
        }
        let shape = Shape::new(d[0], d[1], d[2], d[3]);
        let len = d
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| FormatError::Corrupt(format!("array {name}: dimensions overflow")))?;
        let data = self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((name, shape, data))
    }
}

fn networks_mut(state: &mut TrainState) -> Vec<(&'static str, &mut ParamSet<f32>)> {
    let m = &mut state.models;
    let mut out = vec![("g_xy", &mut m.g_xy.params), ("g_yx", &mut m.g_yx.params)];
    out.push(("d_x", &mut m.d_x.params));
    out.push(("d_y", &mut m.d_y.params));
    if let Some(d) = m.d2_x.as_mut() {
        out.push(("d2_x", &mut d.params));
    }
    if let Some(d) = m.d2_y.as_mut() {
        out.push(("d2_y", &mut d.params));
    }
    out
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let s = &ck.state;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.text(&format_training(&s.config));
    w.u64(s.iteration);
    let rng = RngState::capture(&s.rng);
    w.0.extend_from_slice(&rng.seed);
    w.u64(rng.stream);
    w.0.extend_from_slice(&rng.word_pos.to_le_bytes());
    w.text(&format_stats(&ck.stats_x));
    w.text(&format_stats(&ck.stats_y));
    let nets = s.models.networks();
    let per_net: usize = nets.iter().map(|(_, p)| p.len()).sum();
    w.u32((3 * per_net) as u32);
    for (net, p) in &nets {
        for (name, g) in p.iter() {
            w.array(&format!("{net}/{name}"), g.shape(), g.data());
        }
    }
    for (slot, tag) in [(0, "adam.m"), (1, "adam.v")] {
        for ((net, p), moments) in nets.iter().zip(&s.moments) {
            for ((name, g), m) in p.iter().zip(moments) {
                let data = if slot == 0 { &m.m } else { &m.v };
                w.array(&format!("{tag}/{net}/{name}"), g.shape(), data);
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Decodes a checkpoint. The parameter layout must be exactly the one its
/// own configuration builds.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    if bytes.len() < 8 {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(bad_magic(bytes));
        }
        return Err(FormatError::Corrupt(format!("truncated: {} bytes", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(bad_magic(bytes));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(FormatError::Version {
            found: version,
            supported: VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(FormatError::Corrupt("truncated: no checksum".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(FormatError::Corrupt(
            "checksum mismatch (file truncated or modified)".into(),
        ));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let corrupt = |what: &str, e: Error| FormatError::Corrupt(format!("{what}: {e}"));
    let config = parse_training(r.text()?).map_err(|e| corrupt("configuration block", e))?;
    let iteration = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let stats_x = parse_stats(r.text()?).map_err(|e| corrupt("speaker X statistics", e))?;
    let stats_y = parse_stats(r.text()?).map_err(|e| corrupt("speaker Y statistics", e))?;
    if stats_x.q() != stats_y.q() {
        return Err(FormatError::Corrupt(format!(
            "statistics disagree on Q: {} vs {}",
            stats_x.q(),
            stats_y.q()
        )));
    }
    let mut state = TrainState::new(config, stats_x.q()).map_err(|e| FormatError::Corrupt(e.to_string()))?;
    state.iteration = iteration;
    state.rng = RngState {
        seed,
        stream,
        word_pos,
    }
    .restore();
    let count = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        arrays.push(r.array()?);
    }
    if r.pos != body.len() {
        return Err(FormatError::Corrupt(format!("{} unread bytes", body.len() - r.pos)));
    }
    fill(&mut state, arrays).map_err(FormatError::Corrupt)?;
    Ok(Checkpoint {
        state,
        stats_x,
        stats_y,
    })
}

/// Copies decoded arrays into a freshly built state, in encoding order.
fn fill(state: &mut TrainState, arrays: Vec<(&str, Shape, Vec<f32>)>) -> Result<(), String> {
    let mut expected: Vec<(String, Shape)> = Vec::new();
    for (net, p) in state.models.networks() {
        for (name, g) in p.iter() {
            expected.push((format!("{net}/{name}"), g.shape()));
        }
    }
    let weights = expected.len();
    for tag in ["adam.m", "adam.v"] {
        for i in 0..weights {
            let (name, shape) = expected[i].clone();
            expected.push((format!("{tag}/{name}"), shape));
        }
    }
    if arrays.len() != expected.len() {
        return Err(format!(
            "{} arrays stored, the configured architecture has {}",
            arrays.len(),
            expected.len()
        ));
    }
    for ((name, shape, _), (want, want_shape)) in arrays.iter().zip(&expected) {
        if name != want || shape != want_shape {
            return Err(format!(
                "array {name} {shape:?} where the configuration expects {want} {want_shape:?}"
            ));
        }
    }
    let mut data = arrays.into_iter().map(|(_, _, d)| d);
    for (_, p) in networks_mut(state) {
        for g in p.values_mut() {
            g.data_mut().copy_from_slice(&data.next().expect("counted"));
        }
    }
    for slot in 0..2 {
        for moments in state.moments.iter_mut() {
            for m in moments.iter_mut() {
                let d = data.next().expect("counted");
                let target: &mut Moments<f32> = m;
                if slot == 0 {
                    target.m = d;
                } else {
                    target.v = d;
                }
            }
        }
    }
    Ok(())
}

fn bad_magic(bytes: &[u8]) -> FormatError {
    FormatError::BadMagic {
        expected: MAGIC,
        found: bytes[..4].try_into().expect("4 bytes"),
    }
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    // Write-then-rename so an interrupted save never leaves a partial file.
    let tmp = path.with_extension("partial");
    fs::write(&tmp, encode(ck)).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    })
}

/// Keys whose values change the network layout.
fn architecture(c: &TrainingConfig) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("generator_kind", c.generator_kind.to_string()),
        ("discriminator_kind", c.discriminator_kind.to_string()),
        ("adv_steps", c.adv_steps.to_string()),
        ("g_channel_divisor", c.g_channel_divisor.to_string()),
        ("d_channel_divisor", c.d_channel_divisor.to_string()),
        ("residual_blocks", c.residual_blocks.to_string()),
    ];
    if c.discriminator_kind == cyclevc_core::models::DiscriminatorKind::Full {
        v.push(("crop_frames", c.crop_frames.to_string()));
    }
    v
}

/// Rejects resuming `ck` under `run` (with feature dimension `q`) when the
/// two would build different networks.
pub fn check_architecture(ck: &Checkpoint, run: &TrainingConfig, q: usize) -> Result<()> {
    let have = architecture(&ck.state.config);
    let want = architecture(run);
    let mut diffs: Vec<String> = Vec::new();
    if ck.state.q() != q {
        diffs.push(format!("Q: checkpoint {}, data {q}", ck.state.q()));
    }
    let keys: Vec<&str> = have.iter().chain(&want).map(|(k, _)| *k).collect();
    for key in keys {
        let a = have.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str());
        let b = want.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str());
        let line = format!("{key}: checkpoint {}, run {}", a.unwrap_or("-"), b.unwrap_or("-"));
        if a != b && !diffs.contains(&line) {
            diffs.push(line);
        }
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::ArchitectureMismatch(diffs.join("; ")))
    }
}
