//! Corpus-level experiments: baseline comparison, feature ablation, the
//! gate sensitivity grid and the tracker match-threshold sweep.

use serde::{Deserialize, Serialize};

use crate::domain::{FrameRecord, Label};
use crate::dyad::{self, BoxTimeline, GateConfig};
use crate::error::{Error, Result};
use crate::evalkit::metrics::{cls_evaluate, ClsReport};
use crate::evalkit::mot::{mot_evaluate, GroundTruthFrame};
use crate::features::{self, FeatureConfig, FeatureVector, Statistic, FEATURE_DIM};
use crate::par;
use crate::posestream::{self, SmootherConfig};
use crate::svm::cv::{assign_folds, baseline_predict, cross_validate_with_folds, majority_label, BaselineVariant};
use crate::svm::{GroupKey, LabeledClip, Prediction, TrainConfig};
use crate::synthlab::{ground_truth_tracks, CorpusClip};
use crate::tracker::{self, TrackerConfig};

/// One corpus clip after gating and feature extraction. `features` is
/// `None` when the dyad never survives the gate or the window is unusable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSample {
    pub clip_id: String,
    pub group_key: GroupKey,
    pub label: Label,
    pub features: Option<FeatureVector>,
}

impl ClipSample {
    pub fn gated(&self) -> bool {
        self.features.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcessingConfig {
    pub gate: GateConfig,
    pub smoother: SmootherConfig,
    pub features: FeatureConfig,
}

/// Runs ground-truth tracks of a clip through smoothing and gating and
/// extracts features over the longest surviving dwell run.
pub fn clip_sample(clip: &CorpusClip, cfg: &ProcessingConfig) -> ClipSample {
    let fps = clip.clip.meta.fps;
    let tracks = ground_truth_tracks(&clip.clip.frames);
    let features = (|| {
        let [a, b] = tracks.as_slice() else { return None };
        let (la, lb) = (BoxTimeline::from_track(a)?, BoxTimeline::from_track(b)?);
        let gating = dyad::gate_pair((a.track_id, &la), (b.track_id, &lb), &cfg.gate, fps)?;
        let span = gating.longest_segment()?;
        let trajs = posestream::stabilize(&posestream::assemble(&tracks), &cfg.smoother);
        let window = dyad::build_window(
            (a, b),
            (&la, &lb),
            (trajs.get(&a.track_id)?, trajs.get(&b.track_id)?),
            span,
            cfg.gate.min_coverage,
        )?;
        features::extract(&window, fps, &cfg.features).ok()
    })();
    ClipSample {
        clip_id: clip.clip_id.clone(),
        group_key: clip.group_key.clone(),
        label: clip.clip.label,
        features,
    }
}

pub fn corpus_samples(clips: &[CorpusClip], cfg: &ProcessingConfig) -> Vec<ClipSample> {
    par::map(clips, |c| clip_sample(c, cfg))
}

/// Group-aware stratified folds over all samples, gated or not.
pub fn sample_folds(samples: &[ClipSample], k: usize, seed: u64) -> Result<Vec<usize>> {
    let groups: Vec<GroupKey> = samples.iter().map(|s| s.group_key.clone()).collect();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    assign_folds(&groups, &labels, k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub predictions: Vec<Prediction>,
    pub report: ClsReport,
    pub candidates: usize,
}

fn rejected() -> Prediction {
    baseline_predict(false, BaselineVariant::Majority, Label::LickGroom)
}

/// Cross-validated SVM predictions for every sample; ungated samples are
/// predicted `NoInteraction`.
pub fn evaluate_samples(
    samples: &[ClipSample],
    folds: &[usize],
    k: usize,
    columns: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CorpusEvaluation> {
    if folds.len() != samples.len() {
        return Err(Error::LengthMismatch {
            left: folds.len(),
            right: samples.len(),
        });
    }
    let gated: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].gated()).collect();
    let clips: Vec<LabeledClip> = gated
        .iter()
        .map(|&i| LabeledClip {
            clip_id: samples[i].clip_id.clone(),
            features: samples[i].features.clone().expect("gated"),
            label: samples[i].label,
            group_key: samples[i].group_key.clone(),
        })
        .collect();
    let gated_folds: Vec<usize> = gated.iter().map(|&i| folds[i]).collect();
    let cv = cross_validate_with_folds(&clips, &gated_folds, k, columns, cfg, seed)?;
    let mut predictions = vec![rejected(); samples.len()];
    for (&i, p) in gated.iter().zip(cv.predictions) {
        predictions[i] = p;
    }
    let report = report_for(samples, &predictions)?;
    Ok(CorpusEvaluation {
        predictions,
        report,
        candidates: gated.len(),
    })
}

fn report_for(samples: &[ClipSample], predictions: &[Prediction]) -> Result<ClsReport> {
    let pred: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let truth: Vec<Label> = samples.iter().map(|s| s.label).collect();
    cls_evaluate(&pred, &truth)
}

fn binary(l: Label) -> Label {
    if l == Label::NoInteraction {
        Label::NoInteraction
    } else {
        Label::InteractionPresent
    }
}

/// Share of non-interaction samples given an interaction label.
pub fn distractor_fp_rate(samples: &[ClipSample], predictions: &[Prediction]) -> f64 {
    let (mut n, mut fp) = (0usize, 0usize);
    for (s, p) in samples.iter().zip(predictions) {
        if s.label == Label::NoInteraction {
            n += 1;
            if p.label != Label::NoInteraction {
                fp += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        fp as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub svm: ClsReport,
    pub majority: ClsReport,
    /// Both methods scored with classes collapsed to interaction present.
    pub svm_binary: ClsReport,
    pub occurrence_binary: ClsReport,
    pub svm_fp_rate: f64,
    pub occurrence_fp_rate: f64,
    pub svm_predictions: Vec<Prediction>,
}

impl BaselineComparison {
    pub fn macro_f1_gap(&self) -> f64 {
        self.svm.macro_f1 - self.majority.macro_f1
    }
}

/// Scores the SVM against both proximity-only baselines on identical folds.
/// The majority class is taken from each fold's training portion.
pub fn compare_baseline(
    samples: &[ClipSample],
    folds: &[usize],
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BaselineComparison> {
    let columns: Vec<usize> = (0..FEATURE_DIM).collect();
    let eval = evaluate_samples(samples, folds, k, &columns, cfg, seed)?;
    let majority_by_fold: Vec<Label> = (0..k)
        .map(|f| {
            let train: Vec<Label> = samples
                .iter()
                .zip(folds)
                .filter(|(s, &sf)| sf != f && s.gated())
                .map(|(s, _)| s.label)
                .collect();
            majority_label(&train).unwrap_or(Label::LickGroom)
        })
        .collect();
    let majority: Vec<Prediction> = samples
        .iter()
        .zip(folds)
        .map(|(s, &f)| baseline_predict(s.gated(), BaselineVariant::Majority, majority_by_fold[f]))
        .collect();
    let occurrence: Vec<Prediction> = samples
        .iter()
        .map(|s| baseline_predict(s.gated(), BaselineVariant::Occurrence, Label::LickGroom))
        .collect();
    let truth_bin: Vec<Label> = samples.iter().map(|s| binary(s.label)).collect();
    let svm_bin: Vec<Label> = eval.predictions.iter().map(|p| binary(p.label)).collect();
    let occ_bin: Vec<Label> = occurrence.iter().map(|p| p.label).collect();
    Ok(BaselineComparison {
        majority: report_for(samples, &majority)?,
        svm_binary: cls_evaluate(&svm_bin, &truth_bin)?,
        occurrence_binary: cls_evaluate(&occ_bin, &truth_bin)?,
        svm_fp_rate: distractor_fp_rate(samples, &eval.predictions),
        occurrence_fp_rate: distractor_fp_rate(samples, &occurrence),
        svm: eval.report,
        svm_predictions: eval.predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Full,
    MinusRateOfChange,
    MinusTransitions,
    MeanDistanceOnly,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [
        FeatureSet::Full,
        FeatureSet::MinusRateOfChange,
        FeatureSet::MinusTransitions,
        FeatureSet::MeanDistanceOnly,
    ];

    pub fn statistics(self) -> Vec<Statistic> {
        use Statistic::*;
        match self {
            FeatureSet::Full => vec![Mean, Variance, MeanVelocity, AccelZcr],
            FeatureSet::MinusRateOfChange => vec![Mean, Variance, AccelZcr],
            FeatureSet::MinusTransitions => vec![Mean, Variance, MeanVelocity],
            FeatureSet::MeanDistanceOnly => vec![Mean],
        }
    }

    pub fn columns(self) -> Vec<usize> {
        features::columns_for(&self.statistics())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Full => "full",
            FeatureSet::MinusRateOfChange => "minus_rate_of_change",
            FeatureSet::MinusTransitions => "minus_distance_transitions",
            FeatureSet::MeanDistanceOnly => "mean_distance_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature_set: FeatureSet,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Cross-validates each feature subset on the interaction-labeled samples.
/// Folds are assigned once and shared by every row.
pub fn ablate(samples: &[ClipSample], k: usize, cfg: &TrainConfig, seed: u64) -> Result<Vec<AblationRow>> {
    let labeled: Vec<ClipSample> = samples.iter().filter(|s| s.label.is_class()).cloned().collect();
    let folds = sample_folds(&labeled, k, seed)?;
    let rows = par::map(&FeatureSet::ALL, |&set| -> Result<AblationRow> {
        let e = evaluate_samples(&labeled, &folds, k, &set.columns(), cfg, seed)?;
        Ok(AblationRow {
            feature_set: set,
            accuracy: e.report.accuracy,
            macro_f1: e.report.macro_f1,
        })
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub alpha: f64,
    pub dwell_s: f64,
    /// `None` when no model could be evaluated for the cell.
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    /// Samples surviving gate and dwell.
    pub candidates: usize,
}

impl SensitivityRow {
    pub fn undefined(&self) -> bool {
        self.macro_f1.is_none()
    }
}

pub const DEFAULT_ALPHAS: [f64; 3] = [0.30, 0.35, 0.40];
pub const DEFAULT_DWELLS: [f64; 3] = [3.0, 4.0, 5.0];

/// Re-gates, re-extracts and cross-validates the corpus for every
/// (α, T) cell. Rows are ordered by α, then T; each cell derives its seed
/// from `seed` and its row index.
pub fn sensitivity(
    clips: &[CorpusClip],
    alphas: &[f64],
    dwells: &[f64],
    base: &ProcessingConfig,
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<SensitivityRow>> {
    let cells: Vec<(usize, f64, f64)> = alphas
        .iter()
        .flat_map(|&a| dwells.iter().map(move |&d| (a, d)))
        .enumerate()
        .map(|(i, (a, d))| (i, a, d))
        .collect();
    for &(_, a, d) in &cells {
        GateConfig {
            alpha: a,
            dwell_s: d,
            ..base.gate
        }
        .validate()?;
    }
    let rows = par::map(&cells, |&(i, alpha, dwell_s)| -> Result<SensitivityRow> {
        let cell_seed = par::derive_seed(seed, i as u64);
        let pc = ProcessingConfig {
            gate: GateConfig {
                alpha,
                dwell_s,
                ..base.gate
            },
            ..base.clone()
        };
        let samples = corpus_samples(clips, &pc);
        let candidates = samples.iter().filter(|s| s.gated()).count();
        let columns: Vec<usize> = (0..FEATURE_DIM).collect();
        let eval = sample_folds(&samples, k, cell_seed)
            .and_then(|folds| evaluate_samples(&samples, &folds, k, &columns, cfg, cell_seed));
        let (macro_f1, accuracy) = match eval {
            Ok(e) if candidates > 0 => (Some(e.report.macro_f1), Some(e.report.accuracy)),
            Ok(_) => (None, None),
            Err(Error::DegenerateData(msg)) | Err(Error::InsufficientData(msg)) => {
                log::warn!("sensitivity cell alpha={alpha} dwell={dwell_s}: {msg}");
                (None, None)
            }
            Err(e) => return Err(e),
        };
        Ok(SensitivityRow {
            alpha,
            dwell_s,
            macro_f1,
            accuracy,
            candidates,
        })
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub match_threshold: f64,
    pub tracking_accuracy: f64,
    pub total_tracks: usize,
    pub tracked_frames: usize,
    pub mota: f64,
    pub idf1: f64,
    pub id_switches: usize,
}

/// Reruns the tracker at each match threshold and scores it against the
/// sparse ground truth.
pub fn match_threshold_sweep(
    gt: &[GroundTruthFrame],
    frames: &[FrameRecord],
    thresholds: &[f64],
    base: &TrackerConfig,
    fps: f64,
    iou_gate: f64,
) -> Result<Vec<SweepRow>> {
    let rows = par::map(thresholds, |&th| -> Result<SweepRow> {
        let cfg = TrackerConfig {
            match_threshold: th,
            ..base.clone()
        };
        let (tracks, _) = tracker::track_stream(frames, &cfg, fps)?;
        let tracks = tracker::confirmed_tracks(tracks);
        let row = match mot_evaluate(gt, &tracks, iou_gate) {
            Ok(r) => SweepRow {
                match_threshold: th,
                tracking_accuracy: r.tracking_accuracy,
                total_tracks: r.total_tracks,
                tracked_frames: r.tracked_frames,
                mota: r.mota,
                idf1: r.idf1,
                id_switches: r.id_switches,
            },
            Err(Error::NoOverlap) => SweepRow {
                match_threshold: th,
                tracking_accuracy: 0.0,
                total_tracks: tracks.len(),
                tracked_frames: tracks.iter().map(|t| t.history.len()).sum(),
                mota: 0.0,
                idf1: 0.0,
                id_switches: 0,
            },
            Err(e) => return Err(e),
        };
        Ok(row)
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BBox, Detection};
    use crate::synthlab::{corpus, scene, CorpusSpec, SceneSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_corpus(n: usize, min_s: f64, max_s: f64, seed: u64) -> Vec<CorpusClip> {
        corpus(&CorpusSpec {
            n_per_class: n,
            min_duration_s: min_s,
            max_duration_s: max_s,
            seed,
            ..CorpusSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn constant_features_make_all_ablation_rows_equal() {
        let samples: Vec<ClipSample> = (0..30)
            .map(|i| ClipSample {
                clip_id: format!("c{i}"),
                group_key: GroupKey::new(format!("a{}", i % 6), "z"),
                label: Label::CLASSES[i % 3],
                features: Some(FeatureVector([0.25; FEATURE_DIM])),
            })
            .collect();
        let rows = ablate(&samples, 5, &TrainConfig::default(), 3).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows[1..] {
            assert_eq!((r.accuracy, r.macro_f1), (rows[0].accuracy, rows[0].macro_f1));
        }
    }

    #[test]
    fn short_events_are_excluded_by_long_dwell() {
        let clips = small_corpus(6, 4.5, 4.5, 5);
        let base = ProcessingConfig::default();
        let rows = sensitivity(&clips, &[0.35], &[3.0, 5.0], &base, 5, &TrainConfig::default(), 1).unwrap();
        assert_eq!(rows[0].candidates, clips.len());
        assert!(!rows[0].undefined());
        assert_eq!(rows[1].candidates, 0);
        assert!(rows[1].undefined());
    }

    #[test]
    fn sensitivity_is_deterministic_and_monotone_in_alpha() {
        // wide distractor spread so some dyads fall out at small alpha
        let clips = small_corpus(4, 6.0, 8.0, 9);
        let base = ProcessingConfig::default();
        let cfg = TrainConfig::default();
        let a = sensitivity(&clips, &[0.05, 0.30, 0.35, 0.40], &[3.0, 4.0], &base, 5, &cfg, 4).unwrap();
        let b = sensitivity(&clips, &[0.05, 0.30, 0.35, 0.40], &[3.0, 4.0], &base, 5, &cfg, 4).unwrap();
        assert_eq!(a, b);
        for d in 0..2 {
            let counts: Vec<usize> = (0..4).map(|i| a[i * 2 + d].candidates).collect();
            assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        }
        assert!(a[0].candidates < a[6].candidates);
    }

    fn static_frames(n: u64) -> (Vec<FrameRecord>, Vec<GroundTruthFrame>) {
        let boxes = [
            BBox::new(100.0, 100.0, 300.0, 200.0).unwrap(),
            BBox::new(600.0, 100.0, 800.0, 200.0).unwrap(),
        ];
        let frames = (0..n)
            .map(|f| {
                FrameRecord::new(
                    f,
                    30.0,
                    boxes
                        .iter()
                        .map(|b| Detection {
                            bbox: *b,
                            confidence: 0.9,
                            identity: None,
                            skeleton: None,
                        })
                        .collect(),
                )
            })
            .collect();
        let gt = (0..n)
            .step_by(5)
            .map(|f| GroundTruthFrame {
                frame_index: f,
                boxes: vec![("a".into(), boxes[0]), ("b".into(), boxes[1])],
            })
            .collect();
        (frames, gt)
    }

    #[test]
    fn perfect_detections_track_at_every_threshold() {
        let (frames, gt) = static_frames(40);
        let th = [0.0, 0.3, 0.7, 0.9, 1.0];
        let rows = match_threshold_sweep(&gt, &frames, &th, &TrackerConfig::default(), 30.0, 0.5).unwrap();
        assert_eq!(rows.len(), th.len());
        for r in &rows {
            assert_eq!(r.tracking_accuracy, 1.0, "{r:?}");
            assert_eq!(r.total_tracks, 2);
        }
    }

    #[test]
    fn stricter_gate_fragments_noisy_tracks() {
        let mut s = scene(&SceneSpec {
            events: 2,
            ..SceneSpec::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in &mut s.frames {
            for d in &mut f.detections {
                let (dx, dy) = (rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
                d.bbox = BBox::new(d.bbox.x1 + dx, d.bbox.y1 + dy, d.bbox.x2 + dx, d.bbox.y2 + dy).unwrap();
            }
        }
        let rows =
            match_threshold_sweep(&s.ground_truth, &s.frames, &[0.0, 0.99], &TrackerConfig::default(), 30.0, 0.5)
                .unwrap();
        assert_eq!(rows[0].total_tracks, 6);
        assert!(rows[1].total_tracks > rows[0].total_tracks, "{rows:?}");
    }
}
