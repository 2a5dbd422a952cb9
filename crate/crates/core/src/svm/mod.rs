//! Soft-margin RBF support vector machine trained by SMO.
//!
//! Multiclass problems are decomposed one-vs-one. Inputs are standardized
//! with training-set statistics; features with zero training variance are
//! dropped.

pub mod cv;
pub mod smo;

use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::par;

pub use cv::{
    assign_folds, baseline_predict, cross_validate, cross_validate_with_folds, majority_label, BaselineVariant,
    CvReport, GroupKey, LabeledClip,
};

pub const MODEL_FORMAT: &str = "herdgraph/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// 1 / (F · variance of the standardized training matrix).
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub c: f64,
    pub gamma: Gamma,
    pub balanced: bool,
    pub tol: f64,
    pub max_steps: usize,
    pub reject_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 10.0,
            gamma: Gamma::Scale,
            balanced: true,
            tol: 1e-3,
            max_steps: 2_000_000,
            reject_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("svm.c must be > 0, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("svm.gamma must be > 0, got {g}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("svm.tol must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.reject_threshold) {
            return Err(Error::Config("svm.reject_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub input_dim: usize,
    /// Input columns the model consumes, in order.
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits over `columns` of `rows`, dropping zero-variance columns.
    pub fn fit(rows: &[Vec<f64>], columns: &[usize]) -> Scaler {
        let input_dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for &c in columns {
            let m = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n;
            let s = v.sqrt();
            if s > 1e-12 * (1.0 + m.abs()) {
                kept.push(c);
                mean.push(m);
                std.push(s);
            } else {
                log::warn!("dropping zero-variance feature column {c}");
            }
        }
        Scaler {
            input_dim,
            columns: kept,
            mean,
            std,
        }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(self
            .columns
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&c, (m, s))| (x[c] - m) / s)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    /// Index into the model's class list voted for by a positive decision.
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢyᵢ per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format: String,
    pub classes: Vec<Label>,
    pub scaler: Scaler,
    pub gamma: f64,
    pub c: f64,
    pub class_weights: Vec<f64>,
    pub reject_threshold: f64,
    pub machines: Vec<BinaryMachine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: Label,
    pub votes: usize,
    /// Mean decision value over this class's machines, oriented so that
    /// positive favors the class.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub confidence: f64,
    pub scores: Vec<ClassScore>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains on raw rows restricted to `columns`.
pub fn train_rows(
    rows: &[Vec<f64>],
    labels: &[Label],
    columns: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SvmModel> {
    cfg.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    if let Some(r) = rows.iter().find(|r| r.len() != rows[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: rows[0].len(),
            got: r.len(),
        });
    }
    let mut classes: Vec<Label> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 classes, found {}",
            classes.len()
        )));
    }
    let counts: Vec<usize> = classes
        .iter()
        .map(|c| labels.iter().filter(|l| *l == c).count())
        .collect();
    if let Some((c, n)) = classes.iter().zip(&counts).find(|(_, n)| **n < 2) {
        return Err(Error::DegenerateData(format!("class {c} has {n} sample(s), need >= 2")));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= rows[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: rows[0].len(),
            got: bad + 1,
        });
    }
    let scaler = Scaler::fit(rows, columns);
    if scaler.columns.is_empty() {
        log::warn!("no informative feature columns; model predicts from bias only");
    }
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r)).collect::<Result<_>>()?;
    let dim = scaler.columns.len();
    let gamma = match cfg.gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => {
            let vals: Vec<f64> = xs.iter().flatten().copied().collect();
            let m = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len().max(1) as f64;
            if dim == 0 || v <= 0.0 {
                1.0
            } else {
                1.0 / (dim as f64 * v)
            }
        }
    };
    let n = labels.len() as f64;
    let k = classes.len() as f64;
    let class_weights: Vec<f64> = counts
        .iter()
        .map(|&nk| if cfg.balanced { n / (k * nk as f64) } else { 1.0 })
        .collect();
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("class present"))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, b)))
        .collect();
    let machines = par::map_range(pairs.len(), |p| {
        let (a, b) = pairs[p];
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| class_of[i] == a || class_of[i] == b).collect();
        let y: Vec<f64> = idx.iter().map(|&i| if class_of[i] == a { 1.0 } else { -1.0 }).collect();
        let c: Vec<f64> = idx.iter().map(|&i| cfg.c * class_weights[class_of[i]]).collect();
        let gram = smo::Gram::from_fn(idx.len(), |i, j| rbf(&xs[idx[i]], &xs[idx[j]], gamma));
        let sol = smo::solve(&gram, &y, &c, cfg.tol, cfg.max_steps, par::derive_seed(seed, p as u64));
        if sol.gap > cfg.tol {
            log::warn!("SMO stopped at step limit with KKT gap {:.3e}", sol.gap);
        }
        let mut support_vectors = Vec::new();
        let mut dual_coef = Vec::new();
        for (j, &i) in idx.iter().enumerate() {
            if sol.alpha[j] > 0.0 {
                support_vectors.push(xs[i].clone());
                dual_coef.push(sol.alpha[j] * y[j]);
            }
        }
        BinaryMachine {
            positive: a,
            negative: b,
            support_vectors,
            dual_coef,
            bias: sol.b,
        }
    });
    Ok(SvmModel {
        format: MODEL_FORMAT.to_string(),
        classes,
        scaler,
        gamma,
        c: cfg.c,
        class_weights,
        reject_threshold: cfg.reject_threshold,
        machines,
    })
}

/// Trains on labeled clips using the given feature columns.
pub fn train(clips: &[LabeledClip], columns: &[usize], cfg: &TrainConfig, seed: u64) -> Result<SvmModel> {
    let rows: Vec<Vec<f64>> = clips.iter().map(|c| c.features.0.to_vec()).collect();
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    train_rows(&rows, &labels, columns, cfg, seed)
}

impl SvmModel {
    /// Decision values of every machine, in machine order.
    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.scaler.transform(x)?;
        Ok(self.machines.iter().map(|m| m.decision(&z, self.gamma)).collect())
    }

    pub fn predict_slice(&self, x: &[f64]) -> Result<Prediction> {
        let dec = self.decisions(x)?;
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut margin_sum = vec![0.0; k];
        for (m, d) in self.machines.iter().zip(&dec) {
            // a zero decision goes to the lower class index
            if *d >= 0.0 {
                votes[m.positive] += 1;
            } else {
                votes[m.negative] += 1;
            }
            margin_sum[m.positive] += d;
            margin_sum[m.negative] -= d;
        }
        let per_class = (k - 1) as f64;
        let scores: Vec<ClassScore> = (0..k)
            .map(|i| ClassScore {
                label: self.classes[i],
                votes: votes[i],
                margin: margin_sum[i] / per_class,
            })
            .collect();
        let mut winner = 0;
        for i in 1..k {
            if votes[i] > votes[winner] {
                winner = i;
            }
        }
        // fraction of the winner's own contests that it won
        let share = votes[winner] as f64 / per_class;
        let confidence = share * logistic(scores[winner].margin);
        let label = if confidence < self.reject_threshold {
            Label::NoInteraction
        } else {
            self.classes[winner]
        };
        Ok(Prediction {
            label,
            confidence,
            scores,
        })
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<Prediction> {
        self.predict_slice(f.as_slice())
    }

    pub fn support_vector_count(&self) -> usize {
        self.machines.iter().map(|m| m.support_vectors.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Label::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn separable_toy_perfect_and_margins() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.5],
            vec![0.4, 0.1],
            vec![3.0, 3.0],
            vec![3.3, 2.8],
            vec![2.9, 3.4],
        ];
        let labels = vec![LickGroom, LickGroom, LickGroom, Headbutt, Headbutt, Headbutt];
        let m = train_rows(&rows, &labels, &[0, 1], &cfg(), 1).unwrap();
        for (r, l) in rows.iter().zip(&labels) {
            let p = m.predict_slice(r).unwrap();
            assert_eq!(p.label, *l);
            assert!(p.confidence > m.reject_threshold);
        }
        let mach = &m.machines[0];
        let sv: Vec<&Vec<f64>> = mach.support_vectors.iter().collect();
        for (r, l) in rows.iter().zip(&labels) {
            let z = m.scaler.transform(r).unwrap();
            if sv.iter().any(|s| **s == z) {
                continue;
            }
            let y = if *l == LickGroom { 1.0 } else { -1.0 };
            assert!(y * mach.decision(&z, m.gamma) >= 1.0 - 1e-3);
        }
    }

    #[test]
    fn xor_with_rbf() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels = vec![LickGroom, LickGroom, Headbutt, Headbutt];
        let m = train_rows(&rows, &labels, &[0, 1], &cfg(), 3).unwrap();
        for (r, l) in rows.iter().zip(&labels) {
            let d = m.decisions(r).unwrap()[0];
            assert_eq!(d > 0.0, *l == LickGroom, "{r:?}: {d}");
        }
    }

    #[test]
    fn symmetric_midpoint_ties_to_first_class() {
        let rows = vec![vec![-1.0], vec![-1.0], vec![1.0], vec![1.0]];
        let labels = vec![LickGroom, LickGroom, Headbutt, Headbutt];
        let m = train_rows(&rows, &labels, &[0], &cfg(), 0).unwrap();
        let p = m.predict_slice(&[0.0]).unwrap();
        assert!(m.decisions(&[0.0]).unwrap()[0].abs() < 1e-9);
        assert!((p.confidence - 0.5).abs() < 1e-9);
        if p.confidence >= 0.5 {
            assert_eq!(p.label, LickGroom);
        } else {
            assert_eq!(p.label, NoInteraction);
        }
    }

    #[test]
    fn errors() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            train_rows(&rows, &[LickGroom, LickGroom, Headbutt], &[0], &cfg(), 0),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            train_rows(&rows, &[LickGroom; 3], &[0], &cfg(), 0),
            Err(Error::DegenerateData(_))
        ));
        let rows = vec![vec![0.0], vec![0.1], vec![2.0], vec![2.1]];
        let m = train_rows(&rows, &[LickGroom, LickGroom, Headbutt, Headbutt], &[0], &cfg(), 0).unwrap();
        assert!(matches!(m.predict_slice(&[0.0, 1.0]), Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn zero_variance_column_dropped() {
        let rows = vec![vec![0.0, 5.0], vec![0.1, 5.0], vec![2.0, 5.0], vec![2.1, 5.0]];
        let m = train_rows(&rows, &[LickGroom, LickGroom, Headbutt, Headbutt], &[0, 1], &cfg(), 0).unwrap();
        assert_eq!(m.scaler.columns, vec![0]);
        assert_eq!(m.predict_slice(&[0.05, 9.0]).unwrap().label, LickGroom);
    }

    fn three_class(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(0.0, 0.0), (4.0, 0.0), (2.0, 3.5)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            rows.push(vec![
                centers[c].0 + rng.gen_range(-1.0..1.0),
                centers[c].1 + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
            labels.push(Label::CLASSES[c]);
        }
        (rows, labels)
    }

    #[test]
    fn three_class_training_accuracy_and_determinism() {
        let (rows, labels) = three_class(4, 60);
        let m = train_rows(&rows, &labels, &[0, 1, 2], &cfg(), 9).unwrap();
        assert_eq!(m.machines.len(), 3);
        let preds: Vec<Prediction> = rows.iter().map(|r| m.predict_slice(r).unwrap()).collect();
        let winner = |p: &Prediction| p.scores.iter().rev().max_by_key(|s| s.votes).unwrap().label;
        let correct = preds.iter().zip(&labels).filter(|(p, l)| winner(p) == **l).count();
        assert!(correct >= 57, "{correct}/60");
        for p in &preds {
            assert_eq!(p.label == NoInteraction, p.confidence < m.reject_threshold);
        }
        assert_eq!(m, train_rows(&rows, &labels, &[0, 1, 2], &cfg(), 9).unwrap());
        let p = m.predict_slice(&rows[0]).unwrap();
        assert_eq!(p, m.predict_slice(&rows[0]).unwrap());
    }

    fn bias_only(biases: [f64; 3]) -> SvmModel {
        let pairs = [(0, 1), (0, 2), (1, 2)];
        SvmModel {
            format: MODEL_FORMAT.to_string(),
            classes: Label::CLASSES.to_vec(),
            scaler: Scaler {
                input_dim: 1,
                columns: vec![],
                mean: vec![],
                std: vec![],
            },
            gamma: 1.0,
            c: 1.0,
            class_weights: vec![1.0; 3],
            reject_threshold: 0.5,
            machines: pairs
                .iter()
                .zip(biases)
                .map(|(&(positive, negative), bias)| BinaryMachine {
                    positive,
                    negative,
                    support_vectors: vec![],
                    dual_coef: vec![],
                    bias,
                })
                .collect(),
        }
    }

    #[test]
    fn vote_cycle_rejected_unanimous_accepted() {
        // 0 beats 1, 2 beats 0, 1 beats 2
        let p = bias_only([1.0, -1.0, 1.0]).predict_slice(&[0.0]).unwrap();
        assert_eq!(p.label, NoInteraction);
        assert!(p.confidence <= 0.5 * logistic(1.0));
        let p = bias_only([0.2, 0.3, -5.0]).predict_slice(&[0.0]).unwrap();
        assert_eq!(p.label, LickGroom);
        assert!((p.confidence - logistic(0.25)).abs() < 1e-15);
    }

    #[test]
    fn affine_rescaling_invariance() {
        let (rows, labels) = three_class(8, 45);
        let m = train_rows(&rows, &labels, &[0, 1, 2], &cfg(), 2).unwrap();
        let tf = |r: &Vec<f64>| vec![r[0] * 250.0 - 7.0, -r[1] * 0.01 + 3.0, r[2] * 4.0];
        let rows2: Vec<Vec<f64>> = rows.iter().map(tf).collect();
        let m2 = train_rows(&rows2, &labels, &[0, 1, 2], &cfg(), 2).unwrap();
        let (probe, _) = three_class(77, 30);
        for r in &probe {
            assert_eq!(m.predict_slice(r).unwrap().label, m2.predict_slice(&tf(r)).unwrap().label);
        }
    }

    #[test]
    fn balanced_weights() {
        let (mut rows, mut labels) = three_class(1, 30);
        rows.truncate(24);
        labels.truncate(24);
        rows.extend(three_class(2, 3).0.into_iter().take(1));
        labels.push(LickGroom);
        let m = train_rows(&rows, &labels, &[0, 1, 2], &cfg(), 0).unwrap();
        let n = labels.len() as f64;
        for (i, c) in m.classes.iter().enumerate() {
            let nk = labels.iter().filter(|l| *l == c).count() as f64;
            assert!((m.class_weights[i] - n / (3.0 * nk)).abs() < 1e-15);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (rows, labels) = three_class(5, 30);
        let m = train_rows(&rows, &labels, &[0, 1, 2], &cfg(), 0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SvmModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
