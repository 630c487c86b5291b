//! Mel-cepstral distortion under dynamic time warping, and modulation
//! spectra distance.
//!
//! Both metrics ignore the 0th (energy) coefficient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_10, PI};

use num_traits::Float;

use crate::error::{shape_err, Error, Result};
use crate::features::FeatureSequence;

/// Segment length of the modulation spectrum.
pub const MS_SEGMENT: usize = 64;
/// Hop between segments (50% overlap).
pub const MS_HOP: usize = MS_SEGMENT / 2;
/// Number of non-negative frequency bins.
pub const MS_BINS: usize = MS_SEGMENT / 2 + 1;
/// Power floor before the logarithm.
pub const MS_FLOOR: f64 = 1e-10;

/// `10/ln10 · sqrt(2·Σ(c − t)²)` in dB over already selected coefficients.
pub fn mcd_frame(c: &[f64], t: &[f64]) -> Result<f64> {
    if c.len() != t.len() {
        return Err(shape_err("mcd_frame", "length", format!("{} vs {}", c.len(), t.len())));
    }
    let s: f64 = c.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(10.0 / LN_10 * (2.0 * s).sqrt())
}

/// Monotone alignment from `(0, 0)` to `(Tc − 1, Tt − 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath(pub Vec<(usize, usize)>);

impl AlignmentPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Steps that are not `(1, 1)`.
    pub fn off_diagonal_steps(&self) -> usize {
        self.0
            .windows(2)
            .filter(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1) != (1, 1))
            .count()
    }
}

fn check_pair(a: &FeatureSequence, b: &FeatureSequence, op: &'static str) -> Result<()> {
    if a.q() != b.q() {
        return Err(shape_err(op, "dimension", format!("{} vs {}", a.q(), b.q())));
    }
    if a.q() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{op}: needs at least 2 dimensions (the 0th is excluded)"
        )));
    }
    Ok(())
}

/// Frame `i` of `s` without the 0th coefficient, in `f64`.
fn cepstra(s: &FeatureSequence) -> Vec<Vec<f64>> {
    (0..s.t())
        .map(|i| (1..s.q()).map(|d| s.get(d, i) as f64).collect())
        .collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Exact dynamic-programming alignment minimizing the summed Euclidean frame
/// cost over dimensions `1..Q`. Ties prefer the diagonal step, then a step
/// in the converted index, then in the target index. Returns the path and
/// its cost.
pub fn dtw_align(converted: &FeatureSequence, target: &FeatureSequence) -> Result<(AlignmentPath, f64)> {
    check_pair(converted, target, "dtw_align")?;
    let (a, b) = (cepstra(converted), cepstra(target));
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::infinity(); n * m];
    for i in 0..n {
        for j in 0..m {
            let c = euclid(&a[i], &b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::infinity() };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::infinity() };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::infinity() };
                diag.min(up).min(left)
            };
            acc[i * m + j] = best + c;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::infinity() };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::infinity() };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::infinity() };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok((AlignmentPath(path), acc[n * m - 1]))
}

/// Mean frame MCD along the DTW path.
pub fn mcd_utterance(converted: &FeatureSequence, target: &FeatureSequence) -> Result<f64> {
    let (path, _) = dtw_align(converted, target)?;
    let (a, b) = (cepstra(converted), cepstra(target));
    let mut total = 0.0;
    for &(i, j) in &path.0 {
        total += mcd_frame(&a[i], &b[j])?;
    }
    Ok(total / path.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub values: Vec<f64>,
}

pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("summary of no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MetricSummary {
        mean,
        std: var.sqrt(),
        values: values.to_vec(),
    })
}

/// `log10` of the segment-averaged power spectrum of a mean-removed,
/// Hann-windowed trajectory; `MS_BINS` values. Trajectories shorter than
/// one segment are zero-padded to it.
pub fn modulation_spectrum(traj: &[f64]) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("modulation_spectrum: empty trajectory".into()));
    }
    if let Some(i) = traj.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "modulation_spectrum: frame {i} is not finite"
        )));
    }
    let mean = traj.iter().sum::<f64>() / traj.len() as f64;
    let mut x: Vec<f64> = traj.iter().map(|v| v - mean).collect();
    if x.len() < MS_SEGMENT {
        x.resize(MS_SEGMENT, 0.0);
    }
    let window: Vec<f64> = (0..MS_SEGMENT)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / MS_SEGMENT as f64).cos())
        .collect();
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..MS_SEGMENT)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / MS_SEGMENT as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut power = vec![0.0; MS_BINS];
    let mut segments = 0usize;
    let mut start = 0;
    while start + MS_SEGMENT <= x.len() {
        let seg = &x[start..start + MS_SEGMENT];
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in seg.iter().enumerate() {
                let idx = (k * n) % MS_SEGMENT;
                let wv = v * window[n];
                re += wv * cos[idx];
                im -= wv * sin[idx];
            }
            *p += re * re + im * im;
        }
        segments += 1;
        start += MS_HOP;
    }
    Ok(power
        .into_iter()
        .map(|p| (p / segments as f64).max(MS_FLOOR).log10())
        .collect())
}

/// Root-mean-square difference (dB, i.e. ×10 on `log10` spectra) of the
/// modulation spectra over dimensions `1..Q` and all bins.
pub fn msd(converted: &FeatureSequence, target: &FeatureSequence) -> Result<f64> {
    check_pair(converted, target, "msd")?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for d in 1..converted.q() {
        let to64 = |s: &FeatureSequence| s.dim(d).iter().map(|&v| v as f64).collect::<Vec<_>>();
        let a = modulation_spectrum(&to64(converted))?;
        let b = modulation_spectrum(&to64(target))?;
        for (p, q) in a.iter().zip(&b) {
            let diff = 10.0 * (p - q);
            sum += diff * diff;
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcd_examples() {
        assert_eq!(mcd_frame(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let one = mcd_frame(&[0.0, 1.0, 0.0], &[0.0; 3]).unwrap();
        assert!((one - 6.141_851_463_713_754).abs() < 1e-9, "{one}");
        let two = mcd_frame(&[0.0, 0.0, 2.0], &[0.0; 3]).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert!(mcd_frame(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let s = FeatureSequence::from_fn(4, 7, |d, i| (d * i) as f32 * 0.1).unwrap();
        let (p, cost) = dtw_align(&s, &s).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(p.len(), 7);
        assert_eq!(p.off_diagonal_steps(), 0);
        assert_eq!(mcd_utterance(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_frame_costs_one_extra_step() {
        let c = FeatureSequence::from_fn(2, 3, |d, i| (d as f32 + 1.0) * i as f32).unwrap();
        let t = FeatureSequence::from_fn(2, 4, |d, i| (d as f32 + 1.0) * [0.0, 1.0, 1.0, 2.0][i]).unwrap();
        let (p, cost) = dtw_align(&c, &t).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(p.off_diagonal_steps(), 1);
        assert_eq!(p.0.first(), Some(&(0, 0)));
        assert_eq!(p.0.last(), Some(&(2, 3)));
    }

    #[test]
    fn summary_is_population_statistics() {
        let s = summarize(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 1.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn constant_trajectory_sits_at_floor() {
        let ms = modulation_spectrum(&[3.5; 100]).unwrap();
        assert_eq!(ms.len(), MS_BINS);
        assert!(ms.iter().all(|&v| v == MS_FLOOR.log10()));
    }

    #[test]
    fn scaling_by_two_gives_six_db() {
        let a = FeatureSequence::from_fn(3, 150, |d, i| ((i * (d + 1)) as f32 * 0.37).sin() + 0.2 * d as f32).unwrap();
        let b = FeatureSequence::from_fn(3, 150, |d, i| 2.0 * a.get(d, i)).unwrap();
        let v = msd(&a, &b).unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-6, "{v}");
        assert_eq!(msd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn short_and_empty_inputs() {
        assert_eq!(modulation_spectrum(&[1.0, -1.0, 0.5]).unwrap().len(), MS_BINS);
        assert!(modulation_spectrum(&[]).is_err());
    }
}
