pub mod experiments;
pub mod metrics;
pub mod mot;

pub use experiments::{
    ablate, clip_sample, compare_baseline, corpus_samples, evaluate_samples, match_threshold_sweep, sample_folds,
    sensitivity, AblationRow, BaselineComparison, ClipSample, FeatureSet, ProcessingConfig, SensitivityRow, SweepRow,
};
pub use metrics::{cls_evaluate, ClassMetrics, ClsReport};
pub use mot::{mot_evaluate, GroundTruthFrame, MotReport};
