//! Tracking-by-detection with two-stage confidence-split association.
//!
//! Each frame, live tracks are advanced by a constant-velocity Kalman
//! filter. High-confidence detections are matched first against confirmed
//! and lost tracks, leftover confirmed tracks then get a second chance on
//! low-confidence detections, and finally tentative tracks are matched
//! against what remains of the high-confidence set. Associations are
//! optimal assignments on `1 - IoU`, gated by a minimum overlap.

pub mod assign;
pub mod kalman;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{frames_ceil, BBox, FrameRecord, Skeleton};
use crate::error::{Error, Result};
pub use assign::{assign, hungarian, Assignment};
pub use kalman::{KalmanConfig, KalmanState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// Confidence splitting high from low detections; also gates new tracks.
    pub track_threshold: f64,
    /// Minimum IoU accepted for an association.
    pub match_threshold: f64,
    /// Seconds a lost track is kept before removal.
    pub track_buffer_s: f64,
    /// Detections below this confidence are ignored entirely.
    pub low_threshold: f64,
    /// Minimum IoU for the low-confidence second stage.
    pub second_match_threshold: f64,
    /// Consecutive matched frames needed to confirm a tentative track.
    pub confirm_hits: u32,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            track_threshold: 0.6,
            match_threshold: 0.7,
            track_buffer_s: 2.0,
            low_threshold: 0.1,
            second_match_threshold: 0.5,
            confirm_hits: 2,
            kalman: KalmanConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("tracker.{name} must be in [0, 1], got {v}")))
            }
        };
        unit("track_threshold", self.track_threshold)?;
        unit("match_threshold", self.match_threshold)?;
        unit("low_threshold", self.low_threshold)?;
        unit("second_match_threshold", self.second_match_threshold)?;
        if !(self.track_buffer_s >= 0.0) {
            return Err(Error::Config("tracker.track_buffer_s must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
    Removed,
}

/// One matched detection in a track's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame_index: u64,
    pub bbox: BBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub state: KalmanState,
    pub status: TrackStatus,
    pub last_detection_frame: u64,
    pub history: Vec<Observation>,
    /// Identity labels in arrival order.
    pub identity_votes: Vec<String>,
    pub ever_confirmed: bool,
    hits: u32,
}

impl Track {
    fn start(track_id: u64, obs: Observation, cfg: &TrackerConfig, votes: bool) -> Self {
        let state = KalmanState::initiate(&obs.bbox, &cfg.kalman);
        let confirmed = cfg.confirm_hits <= 1;
        let mut t = Track {
            track_id,
            state,
            status: if confirmed { TrackStatus::Confirmed } else { TrackStatus::Tentative },
            last_detection_frame: obs.frame_index,
            history: Vec::new(),
            identity_votes: Vec::new(),
            ever_confirmed: confirmed,
            hits: 1,
        };
        t.record(obs, votes);
        t
    }

    /// Rebuilds a finished track from stored observations.
    pub fn from_history(track_id: u64, history: Vec<Observation>, votes_threshold: f64) -> Self {
        let last = history.last().expect("non-empty history");
        let state = KalmanState::initiate(&last.bbox, &KalmanConfig::default());
        let identity_votes = history
            .iter()
            .filter(|o| o.confidence >= votes_threshold)
            .filter_map(|o| o.identity.clone())
            .collect();
        Track {
            track_id,
            state,
            status: TrackStatus::Removed,
            last_detection_frame: last.frame_index,
            identity_votes,
            ever_confirmed: true,
            hits: 0,
            history,
        }
    }

    fn record(&mut self, obs: Observation, votes: bool) {
        if votes {
            if let Some(id) = &obs.identity {
                self.identity_votes.push(id.clone());
            }
        }
        self.last_detection_frame = obs.frame_index;
        self.history.push(obs);
    }

    /// Predicted box for the current frame.
    pub fn predicted_bbox(&self) -> BBox {
        self.state.bbox()
    }

    pub fn identity(&self) -> Option<String> {
        identity_of(&self.identity_votes)
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.history.first().map(|o| o.frame_index)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.history.last().map(|o| o.frame_index)
    }

    pub fn observation_at(&self, frame_index: u64) -> Option<&Observation> {
        self.history
            .binary_search_by_key(&frame_index, |o| o.frame_index)
            .ok()
            .map(|i| &self.history[i])
    }
}

/// Majority label; ties go to the label seen first.
pub fn identity_of(votes: &[String]) -> Option<String> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for v in votes {
        match counts.iter_mut().find(|(l, _)| *l == v.as_str()) {
            Some(entry) => entry.1 += 1,
            None => counts.push((v.as_str(), 1)),
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for (label, n) in counts {
        if best.map_or(true, |(_, b)| n > b) {
            best = Some((label, n));
        }
    }
    best.map(|(l, _)| l.to_string())
}

/// Track id assigned to each detection of a frame, in detection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub frame_index: u64,
    pub assignments: Vec<Option<u64>>,
}

/// Sequential single-stream tracker.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    buffer_frames: u64,
    active: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, fps: f64) -> Result<Self> {
        cfg.validate()?;
        if !(fps > 0.0) {
            return Err(Error::Config(format!("fps must be > 0, got {fps}")));
        }
        let buffer_frames = frames_ceil(cfg.track_buffer_s, fps) as u64;
        Ok(Tracker {
            cfg,
            buffer_frames,
            active: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.active
    }

    /// Number of tracks ever created.
    pub fn initialized(&self) -> u64 {
        self.next_id - 1
    }

    pub fn step(&mut self, frame: &FrameRecord) -> Result<StepOutput> {
        let steps = match self.last_frame {
            Some(prev) if frame.frame_index <= prev => {
                return Err(Error::OutOfOrderFrame {
                    previous: prev,
                    got: frame.frame_index,
                })
            }
            Some(prev) => frame.frame_index - prev,
            None => 0,
        };
        self.last_frame = Some(frame.frame_index);
        for t in &mut self.active {
            for _ in 0..steps {
                t.state.predict(&self.cfg.kalman);
            }
        }

        let dets = &frame.detections;
        let mut assignments: Vec<Option<u64>> = vec![None; dets.len()];
        let high: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].confidence >= self.cfg.track_threshold)
            .collect();
        let low: Vec<usize> = (0..dets.len())
            .filter(|&i| {
                dets[i].confidence < self.cfg.track_threshold
                    && dets[i].confidence >= self.cfg.low_threshold
            })
            .collect();

        let mut matched_track = vec![false; self.active.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        // Stage 1: confirmed and lost tracks against high-confidence detections.
        let pool: Vec<usize> = (0..self.active.len())
            .filter(|&t| matches!(self.active[t].status, TrackStatus::Confirmed | TrackStatus::Lost))
            .collect();
        let (m1, high_left) = self.associate(&pool, &high, dets, self.cfg.match_threshold);
        for &(t, d) in &m1 {
            matched_track[t] = true;
            pairs.push((t, d));
        }

        // Stage 2: remaining confirmed tracks against low-confidence detections.
        let pool2: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&t| !matched_track[t] && self.active[t].status == TrackStatus::Confirmed)
            .collect();
        let (m2, _) = self.associate(&pool2, &low, dets, self.cfg.second_match_threshold);
        for &(t, d) in &m2 {
            matched_track[t] = true;
            pairs.push((t, d));
        }

        // Stage 3: tentative tracks against leftover high-confidence detections.
        let tentative: Vec<usize> = (0..self.active.len())
            .filter(|&t| self.active[t].status == TrackStatus::Tentative)
            .collect();
        let (m3, high_new) = self.associate(&tentative, &high_left, dets, self.cfg.match_threshold);
        for &(t, d) in &m3 {
            matched_track[t] = true;
            pairs.push((t, d));
        }

        for &(t, d) in &pairs {
            let det = &dets[d];
            let votes = det.confidence >= self.cfg.track_threshold;
            let track = &mut self.active[t];
            track.state.update(&det.bbox, &self.cfg.kalman);
            track.record(
                Observation {
                    frame_index: frame.frame_index,
                    bbox: det.bbox,
                    confidence: det.confidence,
                    identity: det.identity.clone(),
                    skeleton: det.skeleton.clone(),
                },
                votes,
            );
            track.hits += 1;
            match track.status {
                TrackStatus::Tentative if track.hits >= self.cfg.confirm_hits => {
                    track.status = TrackStatus::Confirmed;
                    track.ever_confirmed = true;
                }
                TrackStatus::Lost => track.status = TrackStatus::Confirmed,
                _ => {}
            }
            assignments[d] = Some(track.track_id);
        }

        for (t, track) in self.active.iter_mut().enumerate() {
            if matched_track[t] {
                continue;
            }
            track.hits = 0;
            match track.status {
                TrackStatus::Tentative => track.status = TrackStatus::Removed,
                TrackStatus::Confirmed => track.status = TrackStatus::Lost,
                _ => {}
            }
            if track.status == TrackStatus::Lost
                && frame.frame_index - track.last_detection_frame > self.buffer_frames
            {
                track.status = TrackStatus::Removed;
            }
        }

        for d in high_new {
            let det = &dets[d];
            let id = self.next_id;
            self.next_id += 1;
            let obs = Observation {
                frame_index: frame.frame_index,
                bbox: det.bbox,
                confidence: det.confidence,
                identity: det.identity.clone(),
                skeleton: det.skeleton.clone(),
            };
            self.active.push(Track::start(id, obs, &self.cfg, true));
            assignments[d] = Some(id);
        }

        let (removed, kept): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.active)
            .into_iter()
            .partition(|t| t.status == TrackStatus::Removed);
        self.active = kept;
        self.finished.extend(removed);

        Ok(StepOutput {
            frame_index: frame.frame_index,
            assignments,
        })
    }

    /// Returns matches as (active track index, detection index) and the
    /// detections left unmatched.
    fn associate(
        &self,
        tracks: &[usize],
        det_idx: &[usize],
        dets: &[crate::domain::Detection],
        gate: f64,
    ) -> (Vec<(usize, usize)>, Vec<usize>) {
        if tracks.is_empty() || det_idx.is_empty() {
            return (Vec::new(), det_idx.to_vec());
        }
        let predicted: Vec<BBox> = tracks.iter().map(|&t| self.active[t].predicted_bbox()).collect();
        let costs: Vec<Vec<f64>> = predicted
            .iter()
            .map(|p| det_idx.iter().map(|&d| 1.0 - p.iou(&dets[d].bbox)).collect())
            .collect();
        let a = assign(&costs, gate);
        let matches = a.matches.iter().map(|&(r, c)| (tracks[r], det_idx[c])).collect();
        let left = a.unmatched_cols.iter().map(|&c| det_idx[c]).collect();
        (matches, left)
    }

    /// All tracks, live and removed, ordered by id.
    pub fn finish(mut self) -> Vec<Track> {
        let mut all = std::mem::take(&mut self.finished);
        all.extend(self.active);
        all.sort_by_key(|t| t.track_id);
        all
    }
}

/// Runs a tracker over a whole stream.
pub fn track_stream(
    frames: &[FrameRecord],
    cfg: &TrackerConfig,
    fps: f64,
) -> Result<(Vec<Track>, Vec<StepOutput>)> {
    let mut tracker = Tracker::new(cfg.clone(), fps)?;
    let mut outputs = Vec::with_capacity(frames.len());
    for f in frames {
        outputs.push(tracker.step(f)?);
    }
    Ok((tracker.finish(), outputs))
}

/// Keeps only tracks that were confirmed at some point.
pub fn confirmed_tracks(tracks: Vec<Track>) -> Vec<Track> {
    tracks.into_iter().filter(|t| t.ever_confirmed).collect()
}

/// Maps track ids to their voted identity labels.
pub fn identity_map(tracks: &[Track]) -> HashMap<u64, Option<String>> {
    tracks.iter().map(|t| (t.track_id, t.identity())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Detection;

    fn det(b: BBox, conf: f64) -> Detection {
        Detection {
            bbox: b,
            confidence: conf,
            identity: None,
            skeleton: None,
        }
    }

    fn frame(i: u64, dets: Vec<Detection>) -> FrameRecord {
        FrameRecord::new(i, 30.0, dets)
    }

    #[test]
    fn first_detection_starts_tentative_track_one() {
        let mut t = Tracker::new(TrackerConfig::default(), 30.0).unwrap();
        let out = t.step(&frame(0, vec![det(BBox::from_center(100.0, 100.0, 80.0, 40.0), 0.9)])).unwrap();
        assert_eq!(out.assignments, vec![Some(1)]);
        assert_eq!(t.active_tracks()[0].status, TrackStatus::Tentative);
        t.step(&frame(1, vec![det(BBox::from_center(101.0, 100.0, 80.0, 40.0), 0.9)])).unwrap();
        assert_eq!(t.active_tracks()[0].status, TrackStatus::Confirmed);
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let mut t = Tracker::new(TrackerConfig::default(), 30.0).unwrap();
        t.step(&frame(5, vec![])).unwrap();
        assert!(matches!(t.step(&frame(5, vec![])), Err(Error::OutOfOrderFrame { .. })));
        assert!(matches!(t.step(&frame(3, vec![])), Err(Error::OutOfOrderFrame { .. })));
    }

    #[test]
    fn low_confidence_detection_does_not_start_track() {
        let mut t = Tracker::new(TrackerConfig::default(), 30.0).unwrap();
        let out = t.step(&frame(0, vec![det(BBox::from_center(10.0, 10.0, 20.0, 20.0), 0.3)])).unwrap();
        assert_eq!(out.assignments, vec![None]);
        assert!(t.active_tracks().is_empty());
    }

    #[test]
    fn low_confidence_detection_extends_confirmed_track() {
        let mut t = Tracker::new(TrackerConfig::default(), 30.0).unwrap();
        for i in 0..3 {
            t.step(&frame(i, vec![det(BBox::from_center(100.0 + i as f64, 50.0, 60.0, 30.0), 0.9)])).unwrap();
        }
        let out = t.step(&frame(3, vec![det(BBox::from_center(103.0, 50.0, 60.0, 30.0), 0.3)])).unwrap();
        assert_eq!(out.assignments, vec![Some(1)]);
    }

    #[test]
    fn occlusion_within_buffer_keeps_id() {
        let cfg = TrackerConfig::default();
        let fps = 30.0;
        let buffer = frames_ceil(cfg.track_buffer_s, fps) as u64;
        let pos = |k: u64| BBox::from_center(200.0 + 2.0 * k as f64, 300.0, 120.0, 60.0);
        let mut t = Tracker::new(cfg, fps).unwrap();
        for k in 0..20 {
            t.step(&frame(k, vec![det(pos(k), 0.9)])).unwrap();
        }
        // gap of buffer - 1 empty frames
        for k in 20..20 + buffer - 1 {
            t.step(&frame(k, vec![])).unwrap();
        }
        let k = 20 + buffer - 1;
        let out = t.step(&frame(k, vec![det(pos(k), 0.9)])).unwrap();
        assert_eq!(out.assignments, vec![Some(1)]);
    }

    #[test]
    fn lost_track_removed_after_buffer() {
        let cfg = TrackerConfig { track_buffer_s: 0.1, ..TrackerConfig::default() };
        let mut t = Tracker::new(cfg, 30.0).unwrap();
        for k in 0..5 {
            t.step(&frame(k, vec![det(BBox::from_center(50.0, 50.0, 40.0, 40.0), 0.9)])).unwrap();
        }
        for k in 5..12 {
            t.step(&frame(k, vec![])).unwrap();
        }
        assert!(t.active_tracks().is_empty());
        let out = t.step(&frame(12, vec![det(BBox::from_center(50.0, 50.0, 40.0, 40.0), 0.9)])).unwrap();
        assert_eq!(out.assignments, vec![Some(2)]);
    }

    #[test]
    fn identity_majority_and_tie_break() {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(identity_of(&v(&["A", "A", "B"])), Some("A".into()));
        assert_eq!(identity_of(&v(&[])), None);
        assert_eq!(identity_of(&v(&["A", "B"])), Some("A".into()));
        assert_eq!(identity_of(&v(&["B", "A", "A", "B"])), Some("B".into()));
    }

    #[test]
    fn two_crossing_objects_keep_identities() {
        let mut t = Tracker::new(TrackerConfig::default(), 30.0).unwrap();
        let mut ids = Vec::new();
        for k in 0..120u64 {
            let x = k as f64 * 4.0;
            let a = BBox::from_center(100.0 + x, 300.0, 160.0, 80.0);
            let b = BBox::from_center(580.0 - x, 340.0, 160.0, 80.0);
            let out = t.step(&frame(k, vec![det(a, 0.9), det(b, 0.9)])).unwrap();
            ids.push(out.assignments);
        }
        for a in &ids {
            assert_eq!(a, &vec![Some(1), Some(2)]);
        }
    }

    #[test]
    fn ids_never_reused() {
        let mut t = Tracker::new(TrackerConfig { track_buffer_s: 0.0, ..Default::default() }, 30.0).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..40u64 {
            let x = if k % 2 == 0 { 0.0 } else { 1000.0 };
            let out = t.step(&frame(k, vec![det(BBox::from_center(x, 0.0, 50.0, 50.0), 0.9)])).unwrap();
            let id = out.assignments[0].unwrap();
            assert!(seen.insert(id), "id {id} reused");
            assert!(t.active_tracks().len() as u64 <= t.initialized());
        }
    }
}
