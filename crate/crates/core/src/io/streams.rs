//! JSON Lines streams: frames, tracks, trajectories, dyad windows,
//! ground truth, events, and the model file.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{jsonl_bytes, open_file, parse_header, write_atomic, Header, JsonLines, FORMAT_VERSION};
use crate::domain::{BBox, Detection, FrameRecord, Keypoint, Skeleton, StreamMeta, KEYPOINT_COUNT};
use crate::dyad::DyadWindow;
use crate::error::{Error, Result};
use crate::evalkit::GroundTruthFrame;
use crate::posestream::TrackTrajectories;
use crate::socialnet::InteractionEvent;
use crate::svm::SvmModel;
use crate::tracker::{Observation, Track};

pub const FRAMES: &str = "frames";
pub const TRACKS: &str = "tracks";
pub const TRAJECTORIES: &str = "trajectories";
pub const WINDOWS: &str = "windows";
pub const GROUND_TRUTH: &str = "ground_truth";
pub const EVENTS: &str = "events";
pub const MODEL: &str = "model";

pub fn write_frames(path: &Path, meta: &StreamMeta, frames: &[FrameRecord]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(&Header::new(FRAMES, Some(meta.clone())), frames)?)
}

// Detections are parsed loosely and then validated so that arity and
// range problems surface as schema errors naming the field.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    frame_index: u64,
    timestamp_s: f64,
    detections: Vec<RawDetection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    bbox: BBox,
    confidence: f64,
    #[serde(default)]
    identity: Option<String>,
    #[serde(default)]
    skeleton: Option<RawSkeleton>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSkeleton {
    points: Vec<Keypoint>,
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn validate_frame(raw: RawFrame, line: usize, previous: Option<u64>) -> Result<FrameRecord> {
    if let Some(p) = previous {
        if raw.frame_index <= p {
            return Err(Error::schema(
                line,
                "frame_index",
                format!("{} does not follow {p}", raw.frame_index),
            ));
        }
    }
    if !raw.timestamp_s.is_finite() {
        return Err(Error::schema(line, "timestamp_s", "must be finite"));
    }
    let mut detections = Vec::with_capacity(raw.detections.len());
    for (i, d) in raw.detections.into_iter().enumerate() {
        if !d.bbox.is_valid() {
            return Err(Error::schema(line, &format!("detections[{i}].bbox"), "invalid box"));
        }
        if !unit_interval(d.confidence) {
            return Err(Error::schema(
                line,
                &format!("detections[{i}].confidence"),
                format!("{} outside [0, 1]", d.confidence),
            ));
        }
        let skeleton = match d.skeleton {
            None => None,
            Some(s) => {
                let n = s.points.len();
                if n != KEYPOINT_COUNT {
                    return Err(Error::schema(
                        line,
                        &format!("detections[{i}].skeleton.points"),
                        format!("expected {KEYPOINT_COUNT} keypoints, got {n}"),
                    ));
                }
                if let Some(j) = s.points.iter().position(|k| !unit_interval(k.confidence)) {
                    return Err(Error::schema(
                        line,
                        &format!("detections[{i}].skeleton.points[{j}].confidence"),
                        format!("{} outside [0, 1]", s.points[j].confidence),
                    ));
                }
                Some(Skeleton::from_vec(s.points)?)
            }
        };
        detections.push(Detection {
            bbox: d.bbox,
            confidence: d.confidence,
            identity: d.identity,
            skeleton,
        });
    }
    Ok(FrameRecord {
        frame_index: raw.frame_index,
        timestamp_s: raw.timestamp_s,
        detections,
    })
}

/// Lazily parses and validates frame records.
pub struct FrameReader<R> {
    body: JsonLines<R>,
    previous: Option<u64>,
    failed: bool,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R) -> Result<(StreamMeta, Self)> {
        let (header, body) = JsonLines::open(reader, FRAMES)?;
        let meta = header.meta.ok_or_else(|| Error::schema(1, "meta", "frames header needs stream metadata"))?;
        Ok((
            meta,
            FrameReader {
                body,
                previous: None,
                failed: false,
            },
        ))
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.body.next_value::<RawFrame>()?.and_then(|(line, raw)| validate_frame(raw, line, self.previous));
        match &out {
            Ok(f) => self.previous = Some(f.frame_index),
            Err(_) => self.failed = true,
        }
        Some(out)
    }
}

pub fn read_frames(path: &Path) -> Result<(StreamMeta, FrameReader<std::io::BufReader<std::fs::File>>)> {
    FrameReader::new(open_file(path)?)
}

/// Reads every frame, stopping at the first error.
pub fn read_all_frames(path: &Path) -> Result<(StreamMeta, Vec<FrameRecord>)> {
    let (meta, reader) = read_frames(path)?;
    Ok((meta, reader.collect::<Result<Vec<_>>>()?))
}

/// One track's observation on one frame, with the track's voted identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub track_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_identity: Option<String>,
    pub bbox: BBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFrame {
    pub frame_index: u64,
    pub tracks: Vec<TrackRecord>,
}

/// Per-frame track records, frames ascending and tracks by id within a
/// frame. Frames without any track are omitted.
pub fn track_frames(tracks: &[Track]) -> Vec<TrackFrame> {
    let mut by_frame: BTreeMap<u64, Vec<TrackRecord>> = BTreeMap::new();
    for t in tracks {
        let identity = t.identity();
        for o in &t.history {
            by_frame.entry(o.frame_index).or_default().push(TrackRecord {
                track_id: t.track_id,
                track_identity: identity.clone(),
                bbox: o.bbox,
                confidence: o.confidence,
                identity: o.identity.clone(),
                skeleton: o.skeleton.clone(),
            });
        }
    }
    by_frame
        .into_iter()
        .map(|(frame_index, mut tracks)| {
            tracks.sort_by_key(|r| r.track_id);
            TrackFrame { frame_index, tracks }
        })
        .collect()
}

pub fn write_tracks(path: &Path, meta: &StreamMeta, tracks: &[Track]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(&Header::new(TRACKS, Some(meta.clone())), track_frames(tracks))?)
}

/// Rebuilds finished tracks, ordered by id, each carrying its recorded
/// voted identity.
pub fn tracks_from_frames(frames: Vec<TrackFrame>) -> Vec<Track> {
    let mut histories: BTreeMap<u64, (Option<String>, Vec<Observation>)> = BTreeMap::new();
    for f in frames {
        for r in f.tracks {
            let entry = histories.entry(r.track_id).or_insert_with(|| (r.track_identity.clone(), Vec::new()));
            entry.1.push(Observation {
                frame_index: f.frame_index,
                bbox: r.bbox,
                confidence: r.confidence,
                identity: r.identity,
                skeleton: r.skeleton,
            });
        }
    }
    histories
        .into_iter()
        .map(|(id, (identity, history))| {
            let mut t = Track::from_history(id, history, f64::INFINITY);
            t.identity_votes = identity.into_iter().collect();
            t
        })
        .collect()
}

pub fn read_tracks(path: &Path) -> Result<(StreamMeta, Vec<Track>)> {
    let (header, body) = JsonLines::open(open_file(path)?, TRACKS)?;
    let meta = header.meta.ok_or_else(|| Error::schema(1, "meta", "tracks header needs stream metadata"))?;
    Ok((meta, tracks_from_frames(body.collect_values()?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryLine {
    track_id: u64,
    keypoints: TrackTrajectories,
}

pub fn write_trajectories(path: &Path, meta: &StreamMeta, trajectories: &BTreeMap<u64, TrackTrajectories>) -> Result<()> {
    let lines = trajectories.iter().map(|(&track_id, keypoints)| TrajectoryLine {
        track_id,
        keypoints: keypoints.clone(),
    });
    write_atomic(path, &jsonl_bytes(&Header::new(TRAJECTORIES, Some(meta.clone())), lines)?)
}

pub fn read_trajectories(path: &Path) -> Result<(StreamMeta, BTreeMap<u64, TrackTrajectories>)> {
    let (header, body) = JsonLines::open(open_file(path)?, TRAJECTORIES)?;
    let meta = header.meta.ok_or_else(|| Error::schema(1, "meta", "trajectories header needs stream metadata"))?;
    let lines: Vec<TrajectoryLine> = body.collect_values()?;
    Ok((meta, lines.into_iter().map(|l| (l.track_id, l.keypoints)).collect()))
}

pub fn write_windows(path: &Path, meta: &StreamMeta, windows: &[DyadWindow]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(&Header::new(WINDOWS, Some(meta.clone())), windows)?)
}

pub fn read_windows(path: &Path) -> Result<(StreamMeta, Vec<DyadWindow>)> {
    let (header, body) = JsonLines::open(open_file(path)?, WINDOWS)?;
    let meta = header.meta.ok_or_else(|| Error::schema(1, "meta", "windows header needs stream metadata"))?;
    Ok((meta, body.collect_values()?))
}

pub fn write_ground_truth(path: &Path, frames: &[GroundTruthFrame]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(&Header::new(GROUND_TRUTH, None), frames)?)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    JsonLines::open(open_file(path)?, GROUND_TRUTH)?.1.collect_values()
}

pub fn write_events(path: &Path, events: &[InteractionEvent]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(&Header::new(EVENTS, None), events)?)
}

pub fn read_events(path: &Path) -> Result<Vec<InteractionEvent>> {
    JsonLines::open(open_file(path)?, EVENTS)?.1.collect_values()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    kind: String,
    model: SvmModel,
}

pub fn model_json(model: &SvmModel) -> String {
    let file = ModelFile {
        format: FORMAT_VERSION.to_string(),
        kind: MODEL.to_string(),
        model: model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn write_model(path: &Path, model: &SvmModel) -> Result<()> {
    write_atomic(path, model_json(model).as_bytes())
}

pub fn parse_model(text: &str) -> Result<SvmModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e))?;
    let mut header = value.clone();
    if let Some(obj) = header.as_object_mut() {
        obj.remove("model");
    }
    parse_header(&header.to_string(), 1, MODEL)?;
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::schema(1, "model", e.to_string()))?;
    Ok(file.model)
}

pub fn read_model(path: &Path) -> Result<SvmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{self, ScenarioSpec, Template};

    fn clip() -> synthlab::SyntheticClip {
        synthlab::generate(&ScenarioSpec {
            template: Template::Headbutt,
            duration_s: 6.0,
            fps: 10.0,
            noise_sigma: 0.02,
            occlusion_rate: 0.1,
            seed: 5,
            identities: ("a".into(), "b".into()),
        })
        .unwrap()
    }

    fn body(lines: &[String]) -> String {
        let header = serde_json::to_string(&Header::new(FRAMES, Some(clip().meta))).unwrap();
        std::iter::once(header).chain(lines.iter().cloned()).collect::<Vec<_>>().join("\n")
    }

    fn read_str(text: &str) -> Result<Vec<FrameRecord>> {
        let (_, r) = FrameReader::new(text.as_bytes())?;
        r.collect()
    }

    #[test]
    fn frames_round_trip_exactly() {
        let c = clip();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        write_frames(&p, &c.meta, &c.frames).unwrap();
        let (meta, frames) = read_all_frames(&p).unwrap();
        assert_eq!(meta, c.meta);
        assert_eq!(frames, c.frames);
        let first = std::fs::read(&p).unwrap();
        write_frames(&p, &meta, &frames).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }

    #[test]
    fn empty_body_yields_nothing() {
        assert!(read_str(&body(&[])).unwrap().is_empty());
    }

    #[test]
    fn short_skeleton_is_a_schema_error_at_its_line() {
        let c = clip();
        let mut lines: Vec<String> = c.frames[..3].iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
        v["detections"][1]["skeleton"]["points"].as_array_mut().unwrap().pop();
        lines[2] = v.to_string();
        match read_str(&body(&lines)) {
            Err(Error::Schema { line, field, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(field, "detections[1].skeleton.points");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_and_order_violations_name_the_field() {
        let c = clip();
        let mut lines: Vec<String> = c.frames[..2].iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        v["detections"][0]["confidence"] = 1.5.into();
        lines[1] = v.to_string();
        assert!(matches!(read_str(&body(&lines)), Err(Error::Schema { field, .. }) if field == "detections[0].confidence"));

        let mut v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        v["detections"][0]["skeleton"]["points"][3]["confidence"] = (-0.1).into();
        let bad = vec![v.to_string()];
        assert!(matches!(read_str(&body(&bad)), Err(Error::Schema { field, .. }) if field == "detections[0].skeleton.points[3].confidence"));

        let repeated = vec![lines[0].clone(), lines[0].clone()];
        assert!(matches!(read_str(&body(&repeated)), Err(Error::Schema { line: 3, field, .. }) if field == "frame_index"));
    }

    #[test]
    fn malformed_json_is_a_parse_error_with_line() {
        let c = clip();
        let lines = vec![serde_json::to_string(&c.frames[0]).unwrap(), "{not json".to_string()];
        assert!(matches!(read_str(&body(&lines)), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn header_version_and_kind_are_checked() {
        let text = body(&[]).replace(FORMAT_VERSION, "herdgraph/9");
        assert!(matches!(read_str(&text), Err(Error::UnknownVersion(_))));
        let text = body(&[]).replace("\"frames\"", "\"tracks\"");
        assert!(matches!(read_str(&text), Err(Error::Schema { field, .. }) if field == "kind"));
        assert!(matches!(read_str(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tracks_round_trip() {
        let c = clip();
        let tracks = synthlab::ground_truth_tracks(&c.frames);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_tracks(&p, &c.meta, &tracks).unwrap();
        let (_, back) = read_tracks(&p).unwrap();
        assert_eq!(back.len(), tracks.len());
        for (a, b) in tracks.iter().zip(&back) {
            assert_eq!(a.track_id, b.track_id);
            assert_eq!(a.history, b.history);
            assert_eq!(a.identity(), b.identity());
        }
        assert_eq!(track_frames(&back), track_frames(&tracks));
    }

    #[test]
    fn model_file_rejects_other_versions() {
        let text = r#"{"format": "herdgraph/0", "kind": "model", "model": {}}"#;
        assert!(matches!(parse_model(text), Err(Error::UnknownVersion(_))));
        let text = r#"{"format": "herdgraph/1", "kind": "frames", "model": {}}"#;
        assert!(matches!(parse_model(text), Err(Error::Schema { .. })));
    }
}
