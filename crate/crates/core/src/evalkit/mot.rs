//! CLEAR-MOT style tracking metrics on sparsely annotated frames.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::BBox;
use crate::error::{Error, Result};
use crate::tracker::assign::{assign, hungarian};
use crate::tracker::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub boxes: Vec<(String, BBox)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    /// Matched ground-truth boxes over all ground-truth boxes.
    pub tracking_accuracy: f64,
    pub mota: f64,
    pub idf1: f64,
    pub id_switches: usize,
    pub total_tracks: usize,
    /// Sum over tracks of frames carrying a matched detection.
    pub tracked_frames: usize,
    pub fragments: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub gt_boxes: usize,
    pub annotated_frames: usize,
}

/// Evaluates `tracks` on the annotated frames of `gt`. A track contributes
/// a box on a frame only where its history holds an observation.
pub fn mot_evaluate(gt: &[GroundTruthFrame], tracks: &[Track], iou_gate: f64) -> Result<MotReport> {
    let range = tracks
        .iter()
        .filter_map(|t| Some((t.first_frame()?, t.last_frame()?)))
        .fold(None, |acc: Option<(u64, u64)>, (a, b)| {
            Some(acc.map_or((a, b), |(x, y)| (x.min(a), y.max(b))))
        });
    let Some((lo, hi)) = range else {
        return Err(Error::NoOverlap);
    };
    if !gt.iter().any(|g| g.frame_index >= lo && g.frame_index <= hi) {
        return Err(Error::NoOverlap);
    }
    let mut frames: Vec<&GroundTruthFrame> = gt.iter().collect();
    frames.sort_by_key(|g| g.frame_index);

    let mut last_match: HashMap<&str, u64> = HashMap::new();
    let mut was_tracked: HashMap<&str, bool> = HashMap::new();
    let mut pending_gap: HashMap<&str, bool> = HashMap::new();
    let mut idtp: BTreeMap<(&str, u64), usize> = BTreeMap::new();
    let (mut fn_, mut fp, mut idsw, mut frag, mut gt_boxes, mut pred_boxes) = (0, 0, 0, 0, 0, 0);
    for g in &frames {
        let preds: Vec<(u64, BBox)> = tracks
            .iter()
            .filter_map(|t| t.observation_at(g.frame_index).map(|o| (t.track_id, o.bbox)))
            .collect();
        gt_boxes += g.boxes.len();
        pred_boxes += preds.len();
        let mut gt_used = vec![false; g.boxes.len()];
        let mut pred_used = vec![false; preds.len()];
        let mut matched: Vec<(usize, usize)> = Vec::new();
        // keep last frame's correspondences while they remain valid
        for (gi, (id, gb)) in g.boxes.iter().enumerate() {
            if let Some(&tid) = last_match.get(id.as_str()) {
                if let Some(pi) = preds.iter().position(|(t, _)| *t == tid) {
                    if !pred_used[pi] && gb.iou(&preds[pi].1) >= iou_gate {
                        gt_used[gi] = true;
                        pred_used[pi] = true;
                        matched.push((gi, pi));
                    }
                }
            }
        }
        let free_gt: Vec<usize> = (0..g.boxes.len()).filter(|&i| !gt_used[i]).collect();
        let free_pred: Vec<usize> = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
        if !free_gt.is_empty() && !free_pred.is_empty() {
            let costs: Vec<Vec<f64>> = free_gt
                .iter()
                .map(|&gi| free_pred.iter().map(|&pi| 1.0 - g.boxes[gi].1.iou(&preds[pi].1)).collect())
                .collect();
            for (r, c) in assign(&costs, iou_gate).matches {
                matched.push((free_gt[r], free_pred[c]));
            }
        }
        let mut tracked_now: BTreeSet<usize> = BTreeSet::new();
        for &(gi, pi) in &matched {
            let id = g.boxes[gi].0.as_str();
            let tid = preds[pi].0;
            tracked_now.insert(gi);
            if let Some(prev) = last_match.insert(id, tid) {
                if prev != tid {
                    idsw += 1;
                }
            }
            if pending_gap.remove(id).unwrap_or(false) {
                frag += 1;
            }
            *idtp.entry((id, tid)).or_insert(0) += 1;
        }
        for (gi, (id, _)) in g.boxes.iter().enumerate() {
            let now = tracked_now.contains(&gi);
            if !now && was_tracked.get(id.as_str()).copied().unwrap_or(false) {
                pending_gap.insert(id.as_str(), true);
            }
            was_tracked.insert(id.as_str(), now);
        }
        fn_ += g.boxes.len() - matched.len();
        fp += preds.len() - matched.len();
    }

    let gt_ids: Vec<&str> = idtp.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let track_ids: Vec<u64> = idtp.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    let mut id_tp = 0usize;
    if !gt_ids.is_empty() {
        let max = idtp.values().copied().max().unwrap_or(0) as f64;
        let costs: Vec<Vec<f64>> = gt_ids
            .iter()
            .map(|g| track_ids.iter().map(|t| max - *idtp.get(&(*g, *t)).unwrap_or(&0) as f64).collect())
            .collect();
        for (r, c) in hungarian(&costs) {
            id_tp += idtp.get(&(gt_ids[r], track_ids[c])).copied().unwrap_or(0);
        }
    }
    let denom = gt_boxes + pred_boxes;
    let matched_total = gt_boxes - fn_;
    Ok(MotReport {
        tracking_accuracy: if gt_boxes == 0 { 0.0 } else { matched_total as f64 / gt_boxes as f64 },
        mota: if gt_boxes == 0 {
            0.0
        } else {
            1.0 - (fn_ + fp + idsw) as f64 / gt_boxes as f64
        },
        idf1: if denom == 0 { 0.0 } else { 2.0 * id_tp as f64 / denom as f64 },
        id_switches: idsw,
        total_tracks: tracks.len(),
        tracked_frames: tracks.iter().map(|t| t.history.len()).sum(),
        fragments: frag,
        false_negatives: fn_,
        false_positives: fp,
        gt_boxes,
        annotated_frames: frames.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Observation;

    fn obs(f: u64, b: BBox) -> Observation {
        Observation {
            frame_index: f,
            bbox: b,
            confidence: 0.9,
            identity: None,
            skeleton: None,
        }
    }

    fn boxes(f: u64) -> [BBox; 3] {
        let x = f as f64 * 3.0;
        [
            BBox::new(x, 0.0, x + 50.0, 40.0).unwrap(),
            BBox::new(x, 200.0, x + 50.0, 240.0).unwrap(),
            BBox::new(400.0 - x, 400.0, 450.0 - x, 440.0).unwrap(),
        ]
    }

    fn gt(frames: u64) -> Vec<GroundTruthFrame> {
        (0..frames)
            .map(|f| GroundTruthFrame {
                frame_index: f,
                boxes: boxes(f).iter().enumerate().map(|(i, b)| (format!("cow{i}"), *b)).collect(),
            })
            .collect()
    }

    fn tracks_from(assign: impl Fn(u64, usize) -> Option<usize>, frames: u64) -> Vec<Track> {
        let mut hist: BTreeMap<u64, Vec<Observation>> = BTreeMap::new();
        for f in 0..frames {
            for (i, b) in boxes(f).iter().enumerate() {
                if let Some(t) = assign(f, i) {
                    hist.entry(t as u64 + 1).or_default().push(obs(f, *b));
                }
            }
        }
        hist.into_iter().map(|(id, h)| Track::from_history(id, h, 0.6)).collect()
    }

    #[test]
    fn perfect_tracking() {
        let t = tracks_from(|_, i| Some(i), 10);
        let r = mot_evaluate(&gt(10), &t, 0.5).unwrap();
        assert_eq!((r.mota, r.idf1, r.id_switches, r.tracking_accuracy), (1.0, 1.0, 0, 1.0));
        assert_eq!(r.fragments, 0);
    }

    #[test]
    fn label_swap_counts_two_switches() {
        let t = tracks_from(|f, i| Some(if f >= 5 && i < 2 { 1 - i } else { i }), 10);
        let r = mot_evaluate(&gt(10), &t, 0.5).unwrap();
        assert_eq!(r.id_switches, 2);
        assert!((r.mota - (1.0 - 2.0 / 30.0)).abs() < 1e-15);
        // optimal identity matching keeps 5 of 10 frames for each swapped pair
        assert!((r.idf1 - 2.0 * 20.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn single_miss() {
        let t = tracks_from(|f, i| if f == 4 && i == 2 { None } else { Some(i) }, 10);
        let r = mot_evaluate(&gt(10), &t, 0.5).unwrap();
        assert_eq!((r.false_negatives, r.false_positives, r.id_switches), (1, 0, 0));
        assert!((r.mota - (1.0 - 1.0 / 30.0)).abs() < 1e-15);
        assert_eq!(r.fragments, 1);
    }

    #[test]
    fn no_overlap() {
        let t = tracks_from(|_, i| Some(i), 5);
        let late: Vec<GroundTruthFrame> = gt(20).into_iter().skip(10).collect();
        assert!(matches!(mot_evaluate(&late, &t, 0.5), Err(Error::NoOverlap)));
        assert!(matches!(mot_evaluate(&gt(3), &[], 0.5), Err(Error::NoOverlap)));
    }
}
