use std::collections::{BTreeMap, BTreeSet, HashSet};

use herdgraph::domain::{BBox, Detection, FrameRecord, Label};
use herdgraph::dyad::{self, GateConfig};
use herdgraph::evalkit::{self, GroundTruthFrame};
use herdgraph::tracker::{Observation, Track, Tracker, TrackerConfig};
use proptest::prelude::*;

fn observed(id: u64, boxes: &[BBox]) -> Track {
    let history = boxes
        .iter()
        .enumerate()
        .map(|(f, &bbox)| Observation {
            frame_index: f as u64,
            bbox,
            confidence: 0.9,
            identity: None,
            skeleton: None,
        })
        .collect();
    Track::from_history(id, history, 0.5)
}

fn det(cx: f64, cy: f64, confidence: f64) -> Detection {
    Detection {
        bbox: BBox::from_center(cx, cy, 80.0, 50.0),
        confidence,
        identity: None,
        skeleton: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every window lies inside a proximate run and is at least a dwell long.
    #[test]
    fn windows_respect_gate_and_dwell(
        runs in proptest::collection::vec((any::<bool>(), 1usize..90), 1..8),
        dwell_s in 0.5..3.0f64,
    ) {
        let fps = 10.0;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (near, len) in runs {
            for _ in 0..len {
                let x = 100.0 + a.len() as f64;
                a.push(BBox::from_center(x, 100.0, 40.0, 30.0));
                b.push(BBox::from_center(x + if near { 30.0 } else { 200.0 }, 100.0, 40.0, 30.0));
            }
        }
        let cfg = GateConfig { dwell_s, window_s: 4.0, stride_s: 1.0, min_coverage: 0.8, ..GateConfig::default() };
        let tracks = [observed(1, &a), observed(2, &b)];
        let dwell = dyad::dwell_frames(dwell_s, fps) as u64;
        for w in dyad::windows(&tracks, &BTreeMap::new(), &cfg, fps) {
            let (s, e) = w.frame_span;
            prop_assert!(e - s + 1 >= dwell);
            for f in s..=e {
                prop_assert!(dyad::proximate(&a[f as usize], &b[f as usize], cfg.alpha));
            }
        }
    }

    #[test]
    fn tracker_ids_unique_and_bounded(
        frames in proptest::collection::vec(
            proptest::collection::vec((0.0..600.0f64, 0.0..400.0f64, 0.05..1.0f64), 0..5),
            1..40,
        ),
    ) {
        let mut tracker = Tracker::new(TrackerConfig::default(), 10.0).unwrap();
        for (i, dets) in frames.iter().enumerate() {
            let record = FrameRecord::new(i as u64, 10.0, dets.iter().map(|&(x, y, c)| det(x, y, c)).collect());
            let out = tracker.step(&record).unwrap();
            let assigned: Vec<u64> = out.assignments.iter().flatten().copied().collect();
            prop_assert_eq!(assigned.iter().collect::<HashSet<_>>().len(), assigned.len());
            prop_assert!(tracker.active_tracks().len() as u64 <= tracker.initialized());
        }
        let tracks = tracker.finish();
        let ids: BTreeSet<u64> = tracks.iter().map(|t| t.track_id).collect();
        prop_assert_eq!(ids.len(), tracks.len());
        for t in &tracks {
            prop_assert!(t.history.windows(2).all(|w| w[0].frame_index < w[1].frame_index));
        }
    }

    /// Ground truth scored against itself is perfect.
    #[test]
    fn ground_truth_against_itself_is_perfect(
        spans in proptest::collection::vec((0u64..20, 1u64..20), 1..5),
    ) {
        let gt: Vec<GroundTruthFrame> = (0..40u64)
            .map(|f| GroundTruthFrame {
                frame_index: f,
                boxes: spans
                    .iter()
                    .enumerate()
                    .filter(|(_, &(s, l))| f >= s && f < s + l)
                    .map(|(i, _)| (format!("cow{i}"), BBox::from_center(100.0 + 150.0 * i as f64, 200.0, 80.0, 50.0)))
                    .collect(),
            })
            .collect();
        let tracks: Vec<Track> = spans
            .iter()
            .enumerate()
            .map(|(i, &(s, l))| {
                let history = (s..s + l)
                    .map(|f| Observation {
                        frame_index: f,
                        bbox: BBox::from_center(100.0 + 150.0 * i as f64, 200.0, 80.0, 50.0),
                        confidence: 0.9,
                        identity: None,
                        skeleton: None,
                    })
                    .collect();
                Track::from_history(i as u64 + 1, history, 0.5)
            })
            .collect();
        let r = evalkit::mot_evaluate(&gt, &tracks, 0.5).unwrap();
        prop_assert_eq!((r.mota, r.idf1, r.id_switches), (1.0, 1.0, 0));
    }

    /// Consistently renaming classes leaves macro-F1 unchanged.
    #[test]
    fn macro_f1_invariant_under_relabeling(
        pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..50),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        let labels = Label::CLASSES;
        let (truth, pred): (Vec<Label>, Vec<Label>) = pairs.iter().map(|&(t, p)| (labels[t], labels[p])).unzip();
        let relabel = |v: &[Label]| -> Vec<Label> {
            v.iter().map(|l| labels[perm[labels.iter().position(|x| x == l).unwrap()]]).collect()
        };
        let a = evalkit::cls_evaluate(&pred, &truth).unwrap();
        let b = evalkit::cls_evaluate(&relabel(&pred), &relabel(&truth)).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert_eq!(a.accuracy, b.accuracy);
    }
}
