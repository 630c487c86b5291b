//! Mel-cepstral feature sequences and the non-network arithmetic around
//! conversion: normalization statistics, the log-Gaussian F0 transform and
//! differential cepstra.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, Shape};
use crate::real::Real;

/// Smallest standard deviation kept by [`compute_stats`].
pub const STD_FLOOR: f64 = 1e-8;

/// A `Q×T` matrix of cepstral coefficients, stored dimension-major
/// (`values[d·T + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    q: usize,
    t: usize,
    values: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(q: usize, t: usize, values: Vec<f32>) -> Result<Self> {
        if q == 0 || t == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature sequence needs q >= 1 and t >= 1, got {q}x{t}"
            )));
        }
        if values.len() != q * t {
            return Err(shape_err(
                "feature_sequence",
                "length",
                format!("{q}x{t} needs {} values, got {}", q * t, values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature value at dim {}, frame {} is not finite",
                i / t,
                i % t
            )));
        }
        Ok(Self { q, t, values })
    }

    pub fn from_fn(q: usize, t: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(q * t);
        for d in 0..q {
            for i in 0..t {
                values.push(f(d, i));
            }
        }
        Self::new(q, t, values)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, d: usize, i: usize) -> f32 {
        self.values[d * self.t + i]
    }

    /// Trajectory of dimension `d` over time.
    pub fn dim(&self, d: usize) -> &[f32] {
        &self.values[d * self.t..(d + 1) * self.t]
    }

    /// Frame `i` as a length-`Q` vector.
    pub fn frame(&self, i: usize) -> Vec<f32> {
        (0..self.q).map(|d| self.get(d, i)).collect()
    }

    /// Columns `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.t {
            return Err(Error::InvalidArgument(format!(
                "frames {start}..{} outside sequence of {} frames",
                start + len,
                self.t
            )));
        }
        Self::from_fn(self.q, len, |d, i| self.get(d, start + i))
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.q != other.q {
            return Err(shape_err(op, "dimension", format!("{} vs {}", self.q, other.q)));
        }
        if self.t != other.t {
            return Err(shape_err(op, "frames", format!("{} vs {}", self.t, other.t)));
        }
        Ok(())
    }

    /// Extends to `len` frames by mirroring around the last frame (without
    /// repeating it); repeated mirroring covers any length.
    pub fn reflect_pad(&self, len: usize) -> Self {
        if len <= self.t {
            return self.clone();
        }
        let src = |i: usize| -> usize {
            if self.t == 1 {
                return 0;
            }
            let period = 2 * (self.t - 1);
            let k = i % period;
            if k < self.t {
                k
            } else {
                period - k
            }
        };
        Self::from_fn(self.q, len, |d, i| self.get(d, src(i))).expect("padding keeps shape valid")
    }
}

/// Stacks equally shaped sequences into an `(N, 1, Q, T)` grid.
pub fn to_grid<F: Real>(batch: &[&FeatureSequence]) -> Result<Grid<F>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let mut data = Vec::with_capacity(batch.len() * first.values.len());
    for s in batch {
        first.check_same_shape(s, "to_grid")?;
        data.extend(s.values.iter().map(|&v| F::of(v as f64)));
    }
    Grid::from_vec(Shape::new(batch.len(), 1, first.q, first.t), data)
}

/// Inverse of [`to_grid`]; accepts `(N, 1, Q, T)` grids.
pub fn from_grid<F: Real>(g: &Grid<F>) -> Result<Vec<FeatureSequence>> {
    let s = g.shape();
    if s.c != 1 {
        return Err(shape_err("from_grid", "channels", format!("expected 1, got {}", s.c)));
    }
    let per = s.h * s.w;
    (0..s.n)
        .map(|n| {
            let values = g.data()[n * per..(n + 1) * per]
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect();
            FeatureSequence::new(s.h, s.w, values)
        })
        .collect()
}

/// Mean and standard deviation of log-F0 over voiced frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogF0Stats {
    pub mean: f64,
    pub std: f64,
}

/// Per-dimension normalization statistics of one speaker's training set.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mcep_mean: Vec<f64>,
    pub mcep_std: Vec<f64>,
    pub logf0: Option<LogF0Stats>,
}

impl NormStats {
    /// Zero mean, unit deviation.
    pub fn identity(q: usize) -> Self {
        Self {
            mcep_mean: alloc::vec![0.0; q],
            mcep_std: alloc::vec![1.0; q],
            logf0: None,
        }
    }

    pub fn q(&self) -> usize {
        self.mcep_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mcep_mean.len() != self.mcep_std.len() {
            return Err(shape_err(
                "norm_stats",
                "dimension",
                format!("{} means vs {} stds", self.mcep_mean.len(), self.mcep_std.len()),
            ));
        }
        if self.mcep_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("norm_stats: standard deviations must be > 0".into()));
        }
        if let Some(f0) = self.logf0 {
            if !(f0.std > 0.0) {
                return Err(Error::InvalidArgument("norm_stats: log-F0 std must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Population mean and standard deviation per dimension over every frame of
/// every sequence, with the deviation floored at [`STD_FLOOR`].
pub fn compute_stats(corpus: &[FeatureSequence]) -> Result<NormStats> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot compute statistics of an empty corpus".into()))?;
    let q = first.q;
    let mut sum = alloc::vec![0.0f64; q];
    let mut frames = 0usize;
    for s in corpus {
        if s.q != q {
            return Err(shape_err("compute_stats", "dimension", format!("{} vs {}", s.q, q)));
        }
        for (d, acc) in sum.iter_mut().enumerate() {
            *acc += s.dim(d).iter().map(|&v| v as f64).sum::<f64>();
        }
        frames += s.t;
    }
    let n = frames as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut sq = alloc::vec![0.0f64; q];
    for s in corpus {
        for (d, acc) in sq.iter_mut().enumerate() {
            *acc += s.dim(d).iter().map(|&v| (v as f64 - mean[d]).powi(2)).sum::<f64>();
        }
    }
    let std = sq.iter().map(|s| Float::sqrt(s / n).max(STD_FLOOR)).collect();
    Ok(NormStats {
        mcep_mean: mean,
        mcep_std: std,
        logf0: None,
    })
}

/// Log-F0 statistics over voiced frames (`F0 > 0`) of raw F0 tracks in Hz.
pub fn compute_logf0_stats(tracks: &[&[f32]]) -> Result<LogF0Stats> {
    let voiced: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.iter())
        .filter(|&&f| f > 0.0)
        .map(|&f| Float::ln(f as f64))
        .collect();
    if voiced.is_empty() {
        return Err(Error::InvalidArgument("no voiced frames (F0 > 0) to compute log-F0 statistics".into()));
    }
    let n = voiced.len() as f64;
    let mean = voiced.iter().sum::<f64>() / n;
    let var = voiced.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(LogF0Stats {
        mean,
        std: Float::sqrt(var).max(STD_FLOOR),
    })
}

fn check_stats(x: &FeatureSequence, s: &NormStats) -> Result<()> {
    if s.q() != x.q || s.mcep_std.len() != x.q {
        return Err(shape_err(
            "normalize",
            "dimension",
            format!("sequence has {} dimensions, statistics have {}", x.q, s.q()),
        ));
    }
    Ok(())
}

/// `(x − mean) / std` per dimension.
pub fn normalize(x: &FeatureSequence, s: &NormStats) -> Result<FeatureSequence> {
    check_stats(x, s)?;
    FeatureSequence::from_fn(x.q, x.t, |d, i| {
        ((x.get(d, i) as f64 - s.mcep_mean[d]) / s.mcep_std[d]) as f32
    })
}

/// `x·std + mean` per dimension; inverse of [`normalize`].
pub fn denormalize(x: &FeatureSequence, s: &NormStats) -> Result<FeatureSequence> {
    check_stats(x, s)?;
    FeatureSequence::from_fn(x.q, x.t, |d, i| {
        (x.get(d, i) as f64 * s.mcep_std[d] + s.mcep_mean[d]) as f32
    })
}

/// Log-Gaussian normalized transform of one voiced log-F0 value:
/// `tgt_mean + (tgt_std / src_std)·(logf0 − src_mean)`.
pub fn convert_f0(logf0: f64, src: &LogF0Stats, tgt: &LogF0Stats) -> Result<f64> {
    if !(src.std > 0.0) || !(tgt.std > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log-F0 standard deviations must be > 0 (source {}, target {})",
            src.std, tgt.std
        )));
    }
    Ok(tgt.mean + (tgt.std / src.std) * (logf0 - src.mean))
}

/// Converts an F0 track in Hz; unvoiced frames (`F0 <= 0`) pass through.
pub fn convert_f0_track(f0: &[f32], src: &LogF0Stats, tgt: &LogF0Stats) -> Result<Vec<f32>> {
    f0.iter()
        .map(|&f| {
            if f > 0.0 {
                Ok(Float::exp(convert_f0(Float::ln(f as f64), src, tgt)?) as f32)
            } else {
                Ok(f)
            }
        })
        .collect()
}

/// Elementwise `converted − source`.
pub fn differential_mceps(source: &FeatureSequence, converted: &FeatureSequence) -> Result<FeatureSequence> {
    source.check_same_shape(converted, "differential_mceps")?;
    FeatureSequence::from_fn(source.q, source.t, |d, i| converted.get(d, i) - source.get(d, i))
}
