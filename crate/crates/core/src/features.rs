//! Keypoint-trajectory features for a dyad window.
//!
//! Three per-frame distance series are derived from the two skeletons
//! (closest keypoint pair, mean over all keypoint pairs, head-centroid
//! distance), each normalized by the mean box diagonal of the frame. Every
//! series contributes four scalars: time mean, time variance, mean signed
//! first derivative (per second) and the zero-crossing rate of its second
//! derivative (crossings per second). The layout is fixed; see
//! [`FEATURE_NAMES`].

use serde::{Deserialize, Serialize};

use crate::domain::HEAD_GROUP;
use crate::dyad::DyadWindow;
use crate::error::{Error, Result};
use crate::posestream::TrackTrajectories;

pub const FEATURE_DIM: usize = 12;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "min_pair_mean",
    "min_pair_variance",
    "min_pair_mean_velocity",
    "min_pair_accel_zcr",
    "mean_pair_mean",
    "mean_pair_variance",
    "mean_pair_mean_velocity",
    "mean_pair_accel_zcr",
    "head_head_mean",
    "head_head_variance",
    "head_head_mean_velocity",
    "head_head_accel_zcr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    MinPair,
    MeanPair,
    HeadHead,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 3] = [SeriesKind::MinPair, SeriesKind::MeanPair, SeriesKind::HeadHead];

    pub fn index(self) -> usize {
        match self {
            SeriesKind::MinPair => 0,
            SeriesKind::MeanPair => 1,
            SeriesKind::HeadHead => 2,
        }
    }
}

/// The four statistics computed per series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Variance,
    MeanVelocity,
    AccelZcr,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Mean,
        Statistic::Variance,
        Statistic::MeanVelocity,
        Statistic::AccelZcr,
    ];

    fn offset(self) -> usize {
        match self {
            Statistic::Mean => 0,
            Statistic::Variance => 1,
            Statistic::MeanVelocity => 2,
            Statistic::AccelZcr => 3,
        }
    }
}

pub fn feature_index(kind: SeriesKind, stat: Statistic) -> usize {
    kind.index() * 4 + stat.offset()
}

/// Column indices carrying the given statistics, over all series.
pub fn columns_for(stats: &[Statistic]) -> Vec<usize> {
    let mut cols: Vec<usize> = SeriesKind::ALL
        .iter()
        .flat_map(|k| stats.iter().map(move |s| feature_index(*k, *s)))
        .collect();
    cols.sort_unstable();
    cols
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn get(&self, kind: SeriesKind, stat: Statistic) -> f64 {
        self.0[feature_index(kind, stat)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn select(&self, columns: &[usize]) -> Vec<f64> {
        columns.iter().map(|&c| self.0[c]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Divide pixel distances by the mean box diagonal of the frame.
    pub normalize: bool,
    /// Deadband as a fraction of the second-derivative standard deviation.
    pub deadband_relative: f64,
    /// Deadband floor in (normalized) distance units per second squared.
    pub deadband_absolute: f64,
    /// Keypoint indices averaged for the head-to-head series.
    pub head_group: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            normalize: true,
            deadband_relative: 0.01,
            deadband_absolute: 0.5,
            head_group: HEAD_GROUP.to_vec(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.deadband_relative >= 0.0) || !(self.deadband_absolute >= 0.0) {
            return Err(Error::Config("features deadbands must be >= 0".into()));
        }
        if self.head_group.is_empty() || self.head_group.iter().any(|&i| i >= crate::domain::KEYPOINT_COUNT) {
            return Err(Error::Config("features.head_group must list keypoint indices 0..26".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub kind: SeriesKind,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DistanceSeries {
    pub fn from_values(kind: SeriesKind, values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        DistanceSeries { kind, values, valid }
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(x, _)| *x)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        let mut valid = self.valid.clone();
        values.reverse();
        valid.reverse();
        DistanceSeries { kind: self.kind, values, valid }
    }
}

fn points_at(traj: &TrackTrajectories, frame: u64) -> Vec<Option<(f64, f64)>> {
    traj.iter()
        .map(|k| k.at(frame).and_then(|s| s.position()))
        .collect()
}

fn centroid(points: &[Option<(f64, f64)>], group: &[usize]) -> Option<(f64, f64)> {
    let present: Vec<(f64, f64)> = group.iter().filter_map(|&i| points.get(i).copied().flatten()).collect();
    if present.is_empty() {
        return None;
    }
    let n = present.len() as f64;
    let (sx, sy) = present.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Some((sx / n, sy / n))
}

/// Per-frame distance series of one kind over the window span.
pub fn distance_series(w: &DyadWindow, kind: SeriesKind, cfg: &FeatureConfig) -> Result<DistanceSeries> {
    let n = w.len();
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let frame = w.frame_span.0 + i as u64;
        let (ba, bb) = &w.boxes[i];
        let norm = if cfg.normalize {
            (ba.diagonal() + bb.diagonal()) / 2.0
        } else {
            1.0
        };
        if !(norm > 0.0) {
            continue;
        }
        let pa = points_at(&w.trajectories[0], frame);
        let pb = points_at(&w.trajectories[1], frame);
        let d = match kind {
            SeriesKind::MinPair | SeriesKind::MeanPair => {
                let mut min = f64::INFINITY;
                let mut sum = 0.0;
                let mut count = 0usize;
                for a in pa.iter().flatten() {
                    for b in pb.iter().flatten() {
                        let d = (a.0 - b.0).hypot(a.1 - b.1);
                        min = min.min(d);
                        sum += d;
                        count += 1;
                    }
                }
                if count == 0 {
                    continue;
                }
                if kind == SeriesKind::MinPair {
                    min
                } else {
                    sum / count as f64
                }
            }
            SeriesKind::HeadHead => {
                let (Some(ca), Some(cb)) = (centroid(&pa, &cfg.head_group), centroid(&pb, &cfg.head_group)) else {
                    continue;
                };
                (ca.0 - cb.0).hypot(ca.1 - cb.1)
            }
        };
        values[i] = d / norm;
        valid[i] = true;
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptySeries);
    }
    Ok(DistanceSeries { kind, values, valid })
}

/// Central finite differences: first derivative per second and second
/// derivative per second squared, defined only where the stencil is valid.
pub fn derivatives(s: &DistanceSeries, fps: f64) -> Result<(DistanceSeries, DistanceSeries)> {
    let valid = s.valid_count();
    if valid < 3 {
        return Err(Error::TooShort { valid });
    }
    let n = s.values.len();
    let mut d1 = DistanceSeries {
        kind: s.kind,
        values: vec![0.0; n],
        valid: vec![false; n],
    };
    let mut d2 = d1.clone();
    for t in 1..n.saturating_sub(1) {
        if s.valid[t - 1] && s.valid[t + 1] {
            d1.values[t] = (s.values[t + 1] - s.values[t - 1]) * fps / 2.0;
            d1.valid[t] = true;
            if s.valid[t] {
                d2.values[t] = (s.values[t + 1] - 2.0 * s.values[t] + s.values[t - 1]) * fps * fps;
                d2.valid[t] = true;
            }
        }
    }
    Ok((d1, d2))
}

/// Sign changes per second among valid samples whose magnitude exceeds
/// `deadband`. Samples inside the deadband are skipped, so a crossing is
/// counted between the nearest samples on either side that clear it. The
/// rate is taken over the span between the first and last valid sample.
pub fn zero_crossing_rate(s: &DistanceSeries, fps: f64, deadband: f64) -> f64 {
    let idx: Vec<usize> = (0..s.values.len()).filter(|&i| s.valid[i]).collect();
    let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
        return 0.0;
    };
    let duration = (last - first) as f64 / fps;
    if duration <= 0.0 {
        return 0.0;
    }
    let mut prev: Option<f64> = None;
    let mut crossings = 0usize;
    for &i in &idx {
        let v = s.values[i];
        if v.abs() <= deadband || v == 0.0 {
            continue;
        }
        if let Some(p) = prev {
            if p.signum() * v.signum() < 0.0 {
                crossings += 1;
            }
        }
        prev = Some(v);
    }
    crossings as f64 / duration
}

fn mean_var(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.max(0.0)))
}

/// Deadband for a second-derivative series under `cfg`.
pub fn deadband_for(d2: &DistanceSeries, cfg: &FeatureConfig) -> f64 {
    let std = mean_var(d2.valid_values()).map_or(0.0, |(_, v)| v.sqrt());
    (cfg.deadband_relative * std).max(cfg.deadband_absolute)
}

/// The four statistics of one series, in [`Statistic::ALL`] order.
pub fn series_statistics(s: &DistanceSeries, fps: f64, cfg: &FeatureConfig) -> Result<[f64; 4]> {
    let (mean, var) = mean_var(s.valid_values()).ok_or(Error::EmptySeries)?;
    let (d1, d2) = derivatives(s, fps)?;
    let (velocity, _) = mean_var(d1.valid_values()).ok_or(Error::TooShort { valid: s.valid_count() })?;
    let zcr = zero_crossing_rate(&d2, fps, deadband_for(&d2, cfg));
    Ok([mean, var, velocity, zcr])
}

/// Full 12-dimensional feature vector for a window.
pub fn extract(w: &DyadWindow, fps: f64, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let mut out = [0.0; FEATURE_DIM];
    for kind in SeriesKind::ALL {
        let stats = distance_series(w, kind, cfg)
            .and_then(|s| series_statistics(&s, fps, cfg))
            .map_err(|e| Error::InsufficientData(format!("{kind:?}: {e}")))?;
        out[kind.index() * 4..kind.index() * 4 + 4].copy_from_slice(&stats);
    }
    Ok(FeatureVector(out))
}
