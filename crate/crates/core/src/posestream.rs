//! Per-track keypoint trajectories and Gaussian-weighted temporal smoothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::KEYPOINT_COUNT;
use crate::error::{Error, Result};
use crate::par;
use crate::tracker::Track;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub frame_index: u64,
    pub x: f64,
    pub y: f64,
    pub present: bool,
}

impl TrajectoryPoint {
    pub fn absent(frame_index: u64) -> Self {
        TrajectoryPoint {
            frame_index,
            x: 0.0,
            y: 0.0,
            present: false,
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.present.then_some((self.x, self.y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTrajectory {
    pub track_id: u64,
    pub keypoint_index: usize,
    pub samples: Vec<TrajectoryPoint>,
}

impl KeypointTrajectory {
    /// Sample at `frame_index`, assuming contiguous frames.
    pub fn at(&self, frame_index: u64) -> Option<&TrajectoryPoint> {
        let first = self.samples.first()?.frame_index;
        let i = frame_index.checked_sub(first)? as usize;
        self.samples.get(i).filter(|s| s.frame_index == frame_index)
    }

    /// Sub-trajectory restricted to an inclusive frame span.
    pub fn slice(&self, start: u64, end: u64) -> KeypointTrajectory {
        KeypointTrajectory {
            track_id: self.track_id,
            keypoint_index: self.keypoint_index,
            samples: self
                .samples
                .iter()
                .filter(|s| s.frame_index >= start && s.frame_index <= end)
                .copied()
                .collect(),
        }
    }
}

/// The 27 trajectories of one track, indexed by keypoint.
pub type TrackTrajectories = Vec<KeypointTrajectory>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherConfig {
    /// Odd window length in frames.
    pub window: usize,
    /// Gaussian width in frames.
    pub sigma: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            window: 7,
            sigma: 7.0 / 4.0,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "smoother.window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("smoother.sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Weight for a frame offset `k` (unnormalized).
    pub fn weight(&self, k: i64) -> f64 {
        let k = k as f64;
        (-(k * k) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn half_window(&self) -> i64 {
        (self.window / 2) as i64
    }
}

/// Builds frame-aligned trajectories over each track's lifetime. Frames
/// without a detection, without a skeleton, or with a missing keypoint
/// yield absent samples.
pub fn assemble(tracks: &[Track]) -> BTreeMap<u64, TrackTrajectories> {
    tracks
        .iter()
        .filter_map(|t| Some((t.track_id, assemble_track(t)?)))
        .collect()
}

pub fn assemble_track(track: &Track) -> Option<TrackTrajectories> {
    let first = track.first_frame()?;
    let last = track.last_frame()?;
    let len = (last - first + 1) as usize;
    let mut out: TrackTrajectories = (0..KEYPOINT_COUNT)
        .map(|k| KeypointTrajectory {
            track_id: track.track_id,
            keypoint_index: k,
            samples: (0..len).map(|i| TrajectoryPoint::absent(first + i as u64)).collect(),
        })
        .collect();
    for obs in &track.history {
        let Some(skel) = &obs.skeleton else { continue };
        let i = (obs.frame_index - first) as usize;
        for (k, kp) in skel.points.iter().enumerate() {
            if kp.is_present() {
                out[k].samples[i] = TrajectoryPoint {
                    frame_index: obs.frame_index,
                    x: kp.x,
                    y: kp.y,
                    present: true,
                };
            }
        }
    }
    Some(out)
}

/// Centered Gaussian-weighted moving average over present samples.
///
/// Weights are renormalized over the present samples inside the window, so
/// absent samples neither contribute nor get filled in.
pub fn smooth(traj: &KeypointTrajectory, cfg: &SmootherConfig) -> KeypointTrajectory {
    let h = cfg.half_window();
    let s = &traj.samples;
    let n = s.len();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        if !s[i].present {
            samples.push(s[i]);
            continue;
        }
        let lo = i.saturating_sub(h as usize);
        let hi = (i + h as usize).min(n - 1);
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for p in &s[lo..=hi] {
            let k = p.frame_index as i64 - s[i].frame_index as i64;
            if !p.present || k.abs() > h {
                continue;
            }
            let w = cfg.weight(k);
            sw += w;
            sx += w * p.x;
            sy += w * p.y;
        }
        samples.push(TrajectoryPoint {
            frame_index: s[i].frame_index,
            x: sx / sw,
            y: sy / sw,
            present: true,
        });
    }
    KeypointTrajectory {
        track_id: traj.track_id,
        keypoint_index: traj.keypoint_index,
        samples,
    }
}

/// Smooths every trajectory of every track.
pub fn stabilize(
    trajectories: &BTreeMap<u64, TrackTrajectories>,
    cfg: &SmootherConfig,
) -> BTreeMap<u64, TrackTrajectories> {
    let flat: Vec<(&u64, &TrackTrajectories)> = trajectories.iter().collect();
    let smoothed = par::map(&flat, |(_, trajs)| {
        trajs.iter().map(|t| smooth(t, cfg)).collect::<TrackTrajectories>()
    });
    flat.into_iter()
        .map(|(id, _)| *id)
        .zip(smoothed)
        .collect()
}
