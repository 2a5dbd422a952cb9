//! Candidate dyad selection: a bounding-box proximity gate followed by a
//! dwell-time filter, then segmentation of surviving runs into windows.
//!
//! Gating only looks at boxes; keypoint data is sliced out for the
//! windows that survive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{frames_ceil, BBox};
use crate::error::{Error, Result};
use crate::par;
use crate::posestream::TrackTrajectories;
use crate::tracker::Track;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    /// Proximity factor on the summed box diagonals.
    pub alpha: f64,
    /// Minimum continuous proximate duration, seconds.
    pub dwell_s: f64,
    /// Analysis window length, seconds.
    pub window_s: f64,
    pub stride_s: f64,
    /// Fraction of window frames on which both tracks must be observed.
    pub min_coverage: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            alpha: 0.35,
            dwell_s: 4.0,
            window_s: 6.0,
            stride_s: 1.0,
            min_coverage: 0.8,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("gate.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.dwell_s >= 0.0) {
            return Err(Error::Config("gate.dwell_s must be >= 0".into()));
        }
        if !(self.window_s > 0.0) || !(self.stride_s > 0.0) {
            return Err(Error::Config("gate.window_s and gate.stride_s must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::Config("gate.min_coverage must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Two animals are proximate when their center distance is at most
/// `alpha` times the sum of their box diagonals (boundary inclusive).
pub fn proximate(a: &BBox, b: &BBox, alpha: f64) -> bool {
    a.center_distance(b) <= alpha * (a.diagonal() + b.diagonal())
}

/// Minimum run length in frames for a dwell threshold.
pub fn dwell_frames(dwell_s: f64, fps: f64) -> usize {
    frames_ceil(dwell_s, fps).max(1)
}

/// Maximal runs of `true` lasting at least `ceil(dwell_s * fps)` frames,
/// as inclusive index ranges into `series`.
pub fn dwell_segments(series: &[bool], dwell_s: f64, fps: f64) -> Vec<(usize, usize)> {
    let min_len = dwell_frames(dwell_s, fps);
    let mut out = Vec::new();
    let mut start = None;
    for (i, &p) in series.iter().enumerate() {
        match (p, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if series.len() - s >= min_len {
            out.push((s, series.len() - 1));
        }
    }
    out
}

/// Slices an inclusive segment into windows of `window` frames at `stride`.
/// Segments shorter than a window yield themselves; a trailing remainder
/// of at least `min_tail` frames becomes a final shorter window.
pub fn segment_windows(
    start: u64,
    end: u64,
    window: usize,
    stride: usize,
    min_tail: usize,
) -> Vec<(u64, u64)> {
    let len = (end - start + 1) as usize;
    let window = window.max(1);
    let stride = stride.max(1);
    if len <= window {
        return vec![(start, end)];
    }
    let mut out = Vec::new();
    let mut s = start;
    while s + window as u64 - 1 <= end {
        out.push((s, s + window as u64 - 1));
        s += stride as u64;
    }
    let last_end = out.last().map(|w| w.1).unwrap_or(start);
    if last_end < end && s <= end && (end - s + 1) as usize >= min_tail {
        out.push((s, end));
    }
    out
}

/// A track's boxes over its lifetime, with gaps linearly interpolated.
#[derive(Debug, Clone)]
pub struct BoxTimeline {
    pub first: u64,
    pub boxes: Vec<BBox>,
    pub observed: Vec<bool>,
}

impl BoxTimeline {
    pub fn from_track(track: &Track) -> Option<Self> {
        let first = track.first_frame()?;
        let last = track.last_frame()?;
        let len = (last - first + 1) as usize;
        let mut boxes = vec![track.history[0].bbox; len];
        let mut observed = vec![false; len];
        for w in track.history.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let span = (b.frame_index - a.frame_index) as f64;
            for f in a.frame_index..b.frame_index {
                let t = (f - a.frame_index) as f64 / span;
                boxes[(f - first) as usize] = a.bbox.lerp(&b.bbox, t);
            }
        }
        for o in &track.history {
            let i = (o.frame_index - first) as usize;
            boxes[i] = o.bbox;
            observed[i] = true;
        }
        Some(BoxTimeline { first, boxes, observed })
    }

    pub fn last(&self) -> u64 {
        self.first + self.boxes.len() as u64 - 1
    }

    pub fn at(&self, frame: u64) -> Option<(&BBox, bool)> {
        let i = frame.checked_sub(self.first)? as usize;
        Some((self.boxes.get(i)?, self.observed[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadWindow {
    /// Track ids, smaller first.
    pub pair: (u64, u64),
    pub identities: (Option<String>, Option<String>),
    /// Inclusive frame span.
    pub frame_span: (u64, u64),
    /// Keypoint trajectories of both tracks restricted to the span.
    pub trajectories: [TrackTrajectories; 2],
    pub boxes: Vec<(BBox, BBox)>,
}

impl DyadWindow {
    pub fn len(&self) -> usize {
        (self.frame_span.1 - self.frame_span.0 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn duration_s(&self, fps: f64) -> f64 {
        self.len() as f64 / fps
    }
}

/// Gating result for one pair of tracks over their shared lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGating {
    pub pair: (u64, u64),
    pub first_frame: u64,
    pub proximate: Vec<bool>,
    pub both_observed: Vec<bool>,
    /// Surviving dwell runs as inclusive frame spans.
    pub segments: Vec<(u64, u64)>,
}

impl PairGating {
    pub fn gated(&self) -> bool {
        !self.segments.is_empty()
    }

    pub fn longest_segment(&self) -> Option<(u64, u64)> {
        // first of the longest on ties
        let mut best: Option<(u64, u64)> = None;
        for &s in &self.segments {
            if best.map_or(true, |b| s.1 - s.0 > b.1 - b.0) {
                best = Some(s);
            }
        }
        best
    }
}

pub fn gate_pair(
    a: (u64, &BoxTimeline),
    b: (u64, &BoxTimeline),
    cfg: &GateConfig,
    fps: f64,
) -> Option<PairGating> {
    let start = a.1.first.max(b.1.first);
    let end = a.1.last().min(b.1.last());
    if start > end {
        return None;
    }
    let mut proximate_series = Vec::with_capacity((end - start + 1) as usize);
    let mut both = Vec::with_capacity(proximate_series.capacity());
    for f in start..=end {
        let (ba, oa) = a.1.at(f)?;
        let (bb, ob) = b.1.at(f)?;
        proximate_series.push(proximate(ba, bb, cfg.alpha));
        both.push(oa && ob);
    }
    let segments = dwell_segments(&proximate_series, cfg.dwell_s, fps)
        .into_iter()
        .map(|(s, e)| (start + s as u64, start + e as u64))
        .collect();
    let pair = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    Some(PairGating {
        pair,
        first_frame: start,
        proximate: proximate_series,
        both_observed: both,
        segments,
    })
}

/// Builds the window for an inclusive span, or `None` if coverage fails.
pub fn build_window(
    tracks: (&Track, &Track),
    timelines: (&BoxTimeline, &BoxTimeline),
    trajectories: (&TrackTrajectories, &TrackTrajectories),
    span: (u64, u64),
    min_coverage: f64,
) -> Option<DyadWindow> {
    let (ta, tb, la, lb, ja, jb) = if tracks.0.track_id <= tracks.1.track_id {
        (tracks.0, tracks.1, timelines.0, timelines.1, trajectories.0, trajectories.1)
    } else {
        (tracks.1, tracks.0, timelines.1, timelines.0, trajectories.1, trajectories.0)
    };
    let mut boxes = Vec::new();
    let mut covered = 0usize;
    for f in span.0..=span.1 {
        let (ba, oa) = la.at(f)?;
        let (bb, ob) = lb.at(f)?;
        if oa && ob {
            covered += 1;
        }
        boxes.push((*ba, *bb));
    }
    if (covered as f64) < min_coverage * boxes.len() as f64 {
        return None;
    }
    let slice = |t: &TrackTrajectories| t.iter().map(|k| k.slice(span.0, span.1)).collect();
    Some(DyadWindow {
        pair: (ta.track_id, tb.track_id),
        identities: (ta.identity(), tb.identity()),
        frame_span: span,
        trajectories: [slice(ja), slice(jb)],
        boxes,
    })
}

/// Enumerates windows over every unordered pair and surviving dwell run.
pub fn windows(
    tracks: &[Track],
    trajectories: &BTreeMap<u64, TrackTrajectories>,
    cfg: &GateConfig,
    fps: f64,
) -> Vec<DyadWindow> {
    let timelines: Vec<Option<BoxTimeline>> = tracks.iter().map(BoxTimeline::from_track).collect();
    let mut pairs = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            if timelines[i].is_some() && timelines[j].is_some() {
                pairs.push((i, j));
            }
        }
    }
    let window = frames_ceil(cfg.window_s, fps).max(1);
    let stride = frames_ceil(cfg.stride_s, fps).max(1);
    let tail = dwell_frames(cfg.dwell_s, fps);
    let empty: TrackTrajectories = Vec::new();
    let per_pair = par::map(&pairs, |&(i, j)| {
        let (la, lb) = (timelines[i].as_ref().unwrap(), timelines[j].as_ref().unwrap());
        let Some(g) = gate_pair((tracks[i].track_id, la), (tracks[j].track_id, lb), cfg, fps) else {
            return Vec::new();
        };
        let ja = trajectories.get(&tracks[i].track_id).unwrap_or(&empty);
        let jb = trajectories.get(&tracks[j].track_id).unwrap_or(&empty);
        g.segments
            .iter()
            .flat_map(|&(s, e)| segment_windows(s, e, window, stride, tail))
            .filter_map(|span| {
                build_window((&tracks[i], &tracks[j]), (la, lb), (ja, jb), span, cfg.min_coverage)
            })
            .collect::<Vec<_>>()
    });
    let mut out: Vec<DyadWindow> = per_pair.into_iter().flatten().collect();
    out.sort_by_key(|w| (w.pair, w.frame_span));
    out
}
