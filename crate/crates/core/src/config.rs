//! Single JSON run configuration with one section per module. Every key
//! is required when loading from a file; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyad::GateConfig;
use crate::error::{Error, Result};
use crate::evalkit::experiments::{ProcessingConfig, DEFAULT_ALPHAS, DEFAULT_DWELLS};
use crate::features::FeatureConfig;
use crate::par;
use crate::posestream::SmootherConfig;
use crate::socialnet::NetworkConfig;
use crate::svm::TrainConfig;
use crate::synthlab::{CorpusSpec, SceneSpec};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub corpus: CorpusSpec,
    pub scene: SceneSpec,
    /// Events in the scene used to train a model when none is supplied.
    pub training_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    /// Minimum IoU for a track box to match a ground-truth box.
    pub iou_gate: f64,
    pub match_thresholds: Vec<f64>,
    pub alphas: Vec<f64>,
    pub dwells_s: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            iou_gate: 0.5,
            match_thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            dwells_s: DEFAULT_DWELLS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; every seeded stage derives from it.
    pub seed: u64,
    pub tracker: TrackerConfig,
    pub smoother: SmootherConfig,
    pub gate: GateConfig,
    pub features: FeatureConfig,
    pub svm: TrainConfig,
    pub synth: SynthConfig,
    pub network: NetworkConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 7,
            tracker: TrackerConfig::default(),
            smoother: SmootherConfig::default(),
            gate: GateConfig::default(),
            features: FeatureConfig::default(),
            svm: TrainConfig::default(),
            synth: SynthConfig {
                corpus: CorpusSpec::default(),
                scene: SceneSpec::default(),
                training_events: 60,
            },
            network: NetworkConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Seed streams derived from the master seed.
pub mod streams {
    pub const CORPUS: u64 = 1;
    pub const SCENE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const FOLDS: u64 = 4;
    pub const TRAINING_SCENE: u64 = 5;
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.smoother.validate()?;
        self.gate.validate()?;
        self.features.validate()?;
        self.svm.validate()?;
        let e = &self.eval;
        if e.folds < 2 {
            return Err(Error::Config("eval.folds must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&e.iou_gate) {
            return Err(Error::Config("eval.iou_gate must lie in [0, 1]".into()));
        }
        if e.match_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("eval.match_thresholds must lie in [0, 1]".into()));
        }
        if e.alphas.iter().any(|a| !(*a > 0.0)) || e.dwells_s.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("eval.alphas must be > 0 and eval.dwells_s >= 0".into()));
        }
        if !(self.network.merge_gap_s >= 0.0) {
            return Err(Error::Config("network.merge_gap_s must be >= 0".into()));
        }
        Ok(())
    }

    pub fn seed_for(&self, stream: u64) -> u64 {
        par::derive_seed(self.seed, stream)
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.seed_for(streams::CORPUS),
            ..self.synth.corpus.clone()
        }
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: self.seed_for(streams::SCENE),
            ..self.synth.scene.clone()
        }
    }

    /// Scene for training a model when none is supplied: the configured
    /// scene with more events and its own seed.
    pub fn training_scene_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: self.seed_for(streams::TRAINING_SCENE),
            events: self.synth.training_events,
            ..self.synth.scene.clone()
        }
    }

    pub fn processing(&self) -> ProcessingConfig {
        ProcessingConfig {
            gate: self.gate,
            smoother: self.smoother,
            features: self.features.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let c = Config::default();
        let back = Config::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_key_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(&Config::default().to_json()).unwrap();
        v["gate"].as_object_mut().unwrap().remove("dwell_s");
        let err = Config::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("dwell_s"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&Config::default().to_json()).unwrap();
        v["svm"]["kernel"] = "linear".into();
        let err = Config::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("kernel"), "{err}");
    }

    #[test]
    fn published_constants_are_named_keys() {
        let v: serde_json::Value = serde_json::from_str(&Config::default().to_json()).unwrap();
        assert_eq!(v["gate"]["alpha"], 0.35);
        assert_eq!(v["gate"]["dwell_s"], 4.0);
        assert_eq!(v["svm"]["c"], 10.0);
        assert_eq!(v["svm"]["gamma"], "scale");
        assert_eq!(v["tracker"]["match_threshold"], 0.7);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = Config::default();
        c.gate.alpha = -1.0;
        assert!(matches!(Config::from_json(&c.to_json()), Err(Error::Config(_))));
    }
}
