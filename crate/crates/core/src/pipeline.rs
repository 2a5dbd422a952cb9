//! End-to-end stage chain: track, stabilize, gate, extract, classify and
//! aggregate into social graphs, with wall time recorded per stage.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::domain::{FrameRecord, Label};
use crate::dyad::{self, DyadWindow};
use crate::error::Result;
use crate::features::{self, FeatureVector};
use crate::par;
use crate::posestream::{self, TrackTrajectories};
use crate::socialnet::{self, InteractionEvent, Layer, NetworkConfig, NetworkMetrics, SocialGraph};
use crate::svm::{GroupKey, LabeledClip, Prediction, SvmModel};
use crate::synthlab::GtEvent;
use crate::tracker::{self, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings(pub Vec<StageTiming>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Node name for a track: its voted identity, else `track<id>`.
pub fn node_name(identity: &Option<String>, track_id: u64) -> String {
    match identity {
        Some(id) => id.clone(),
        None => format!("track{track_id}"),
    }
}

pub fn roster(tracks: &[Track]) -> Vec<String> {
    let mut r: Vec<String> = tracks.iter().map(|t| node_name(&t.identity(), t.track_id)).collect();
    r.sort();
    r.dedup();
    r
}

pub fn track(frames: &[FrameRecord], cfg: &Config, fps: f64) -> Result<Vec<Track>> {
    let (tracks, _) = tracker::track_stream(frames, &cfg.tracker, fps)?;
    Ok(tracker::confirmed_tracks(tracks))
}

pub fn stabilize(tracks: &[Track], cfg: &Config) -> BTreeMap<u64, TrackTrajectories> {
    posestream::stabilize(&posestream::assemble(tracks), &cfg.smoother)
}

pub fn gate(tracks: &[Track], trajectories: &BTreeMap<u64, TrackTrajectories>, cfg: &Config, fps: f64) -> Vec<DyadWindow> {
    dyad::windows(tracks, trajectories, &cfg.gate, fps)
}

/// A window whose features could not be computed carries `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub pair: (u64, u64),
    pub nodes: (String, String),
    pub frame_span: (u64, u64),
    pub features: Option<FeatureVector>,
}

impl WindowFeatures {
    pub fn group_key(&self) -> GroupKey {
        GroupKey::new(self.nodes.0.clone(), self.nodes.1.clone())
    }
}

pub fn extract(windows: &[DyadWindow], cfg: &Config, fps: f64) -> Vec<WindowFeatures> {
    par::map(windows, |w| {
        let features = match features::extract(w, fps, &cfg.features) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("window {:?} {:?}: {e}", w.pair, w.frame_span);
                None
            }
        };
        if w.identities.0.is_none() || w.identities.1.is_none() {
            log::warn!("window {:?} lacks identities; using track ids as node names", w.pair);
        }
        WindowFeatures {
            pair: w.pair,
            nodes: (node_name(&w.identities.0, w.pair.0), node_name(&w.identities.1, w.pair.1)),
            frame_span: w.frame_span,
            features,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedWindow {
    pub window: WindowFeatures,
    /// `None` when the window had no features.
    pub prediction: Option<Prediction>,
}

impl ClassifiedWindow {
    pub fn label(&self) -> Label {
        self.prediction.as_ref().map_or(Label::NoInteraction, |p| p.label)
    }
}

pub fn classify(windows: &[WindowFeatures], model: &SvmModel) -> Result<Vec<ClassifiedWindow>> {
    par::try_map(windows, |w| {
        let prediction = w.features.as_ref().map(|f| model.predict(f)).transpose()?;
        Ok(ClassifiedWindow {
            window: w.clone(),
            prediction,
        })
    })
}

/// Windows classified as an interaction class become events.
pub fn events(classified: &[ClassifiedWindow]) -> Vec<InteractionEvent> {
    classified
        .iter()
        .filter_map(|c| {
            let p = c.prediction.as_ref()?;
            p.label.is_class().then(|| InteractionEvent {
                pair: c.window.group_key(),
                label: p.label,
                frame_span: c.window.frame_span,
                confidence: p.confidence,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayer {
    pub graph: SocialGraph,
    pub metrics: NetworkMetrics,
}

pub fn networks(events: &[InteractionEvent], roster: &[String], cfg: &NetworkConfig, fps: f64) -> Vec<NetworkLayer> {
    par::map(&Layer::ALL, |&layer| {
        let graph = socialnet::build(events, roster, layer, cfg, fps);
        let metrics = socialnet::metrics(&graph);
        NetworkLayer { graph, metrics }
    })
}

/// Labels each feature window with the ground-truth event of the same pair
/// that it overlaps most; windows overlapping none are dropped.
pub fn label_windows(windows: &[WindowFeatures], gt: &[GtEvent]) -> Vec<LabeledClip> {
    windows
        .iter()
        .filter_map(|w| {
            let features = w.features.clone()?;
            let key = w.group_key();
            let overlap = |e: &GtEvent| {
                let lo = w.frame_span.0.max(e.frame_span.0);
                let hi = w.frame_span.1.min(e.frame_span.1);
                if hi >= lo {
                    hi - lo + 1
                } else {
                    0
                }
            };
            let best = gt
                .iter()
                .filter(|e| e.pair == key)
                .map(|e| (overlap(e), e))
                .filter(|(o, _)| *o > 0)
                .max_by_key(|(o, _)| *o)?;
            Some(LabeledClip {
                clip_id: format!("{}-{}-{}", key.0, key.1, w.frame_span.0),
                features,
                label: best.1.label,
                group_key: key,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub tracks: Vec<Track>,
    pub windows: Vec<WindowFeatures>,
}

/// Tracking through feature extraction.
pub fn front_end(frames: &[FrameRecord], cfg: &Config, fps: f64, timings: &mut Timings) -> Result<FrontEnd> {
    let tracks = timings.time("track", || track(frames, cfg, fps))?;
    let trajectories = timings.time("stabilize", || stabilize(&tracks, cfg));
    let windows = timings.time("gate", || gate(&tracks, &trajectories, cfg, fps));
    let windows = timings.time("features", || extract(&windows, cfg, fps));
    Ok(FrontEnd { tracks, windows })
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub tracks: Vec<Track>,
    pub classified: Vec<ClassifiedWindow>,
    pub events: Vec<InteractionEvent>,
    pub layers: Vec<NetworkLayer>,
    pub timings: Timings,
}

pub fn run(frames: &[FrameRecord], fps: f64, model: &SvmModel, cfg: &Config) -> Result<PipelineRun> {
    let mut timings = Timings::default();
    let fe = front_end(frames, cfg, fps, &mut timings)?;
    let classified = timings.time("classify", || classify(&fe.windows, model))?;
    let (events, layers) = timings.time("network", || {
        let events = events(&classified);
        let layers = networks(&events, &roster(&fe.tracks), &cfg.network, fps);
        (events, layers)
    });
    Ok(PipelineRun {
        tracks: fe.tracks,
        classified,
        events,
        layers,
        timings,
    })
}
