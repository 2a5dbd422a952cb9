//! Stratified group k-fold cross-validation and the proximity baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, ClassScore, Prediction, TrainConfig};
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::evalkit::metrics::{cls_evaluate, ClsReport};
use crate::features::FeatureVector;
use crate::par;

/// Unordered identity pair, stored with the smaller name first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey(pub String, pub String);

impl GroupKey {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            GroupKey(a, b)
        } else {
            GroupKey(b, a)
        }
    }

    pub fn members(&self) -> [&str; 2] {
        [&self.0, &self.1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub clip_id: String,
    pub features: FeatureVector,
    pub label: Label,
    pub group_key: GroupKey,
}

/// Assigns each sample to one of `k` folds so that samples sharing a group
/// key share a fold.
///
/// Groups are placed largest first (ties in seeded order) into the fold
/// that, in priority order, leaks the fewest identities into other folds,
/// deviates least from per-class fold targets, is smallest, and has the
/// lowest index. Folds never exceed ⌈N/k⌉ samples unless no fold can take
/// the group, and every fold receives at least one group.
pub fn assign_folds(groups: &[GroupKey], labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if groups.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: groups.len(),
            right: labels.len(),
        });
    }
    let mut members: BTreeMap<&GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    if k < 2 || members.len() < k {
        return Err(Error::TooFewGroups {
            needed: k.max(2),
            found: members.len(),
        });
    }
    let mut classes: Vec<Label> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let class_ix = |l: Label| classes.binary_search(&l).expect("class");
    let n = labels.len();
    let target: Vec<f64> = classes
        .iter()
        .map(|c| labels.iter().filter(|l| *l == c).count() as f64 / k as f64)
        .collect();
    let cap = n.div_ceil(k);

    let mut order: Vec<(&GroupKey, Vec<usize>)> = members.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut fold_of = vec![usize::MAX; n];
    let mut size = vec![0usize; k];
    let mut class_count = vec![vec![0usize; classes.len()]; k];
    let mut idents: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
    let mut groups_in = vec![0usize; k];
    for (remaining, (key, idx)) in (0..order.len()).rev().zip(&order) {
        let mut gc = vec![0usize; classes.len()];
        for &i in idx {
            gc[class_ix(labels[i])] += 1;
        }
        let empty: Vec<usize> = (0..k).filter(|&f| groups_in[f] == 0).collect();
        let mut candidates: Vec<usize> = if remaining < empty.len() {
            empty
        } else {
            (0..k).filter(|&f| size[f] + idx.len() <= cap).collect()
        };
        if candidates.is_empty() {
            candidates = (0..k).collect();
        }
        let score = |f: usize| {
            let leak = key
                .members()
                .iter()
                .filter(|m| (0..k).any(|o| o != f && idents[o].contains(*m)))
                .count();
            let dev: f64 = (0..classes.len())
                .map(|c| ((class_count[f][c] + gc[c]) as f64 - target[c]).abs() - (class_count[f][c] as f64 - target[c]).abs())
                .sum();
            (leak, dev, size[f], f)
        };
        let best = candidates
            .into_iter()
            .min_by(|&a, &b| {
                let (sa, sb) = (score(a), score(b));
                sa.0.cmp(&sb.0)
                    .then(sa.1.total_cmp(&sb.1))
                    .then(sa.2.cmp(&sb.2))
                    .then(sa.3.cmp(&sb.3))
            })
            .expect("at least one fold");
        for &i in idx {
            fold_of[i] = best;
        }
        size[best] += idx.len();
        groups_in[best] += 1;
        for c in 0..classes.len() {
            class_count[best][c] += gc[c];
        }
        for m in key.members() {
            idents[best].insert(m);
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub fold_reports: Vec<ClsReport>,
    pub pooled: ClsReport,
}

/// Cross-validates with freshly assigned folds.
pub fn cross_validate(
    clips: &[LabeledClip],
    k: usize,
    columns: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CvReport> {
    let groups: Vec<GroupKey> = clips.iter().map(|c| c.group_key.clone()).collect();
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let folds = assign_folds(&groups, &labels, k, seed)?;
    cross_validate_with_folds(clips, &folds, k, columns, cfg, seed)
}

/// Cross-validates over a fixed fold assignment. Each fold model trains on
/// the interaction-class clips of the other folds and predicts every clip of
/// its own fold; metrics are computed on the pooled out-of-fold predictions.
pub fn cross_validate_with_folds(
    clips: &[LabeledClip],
    folds: &[usize],
    k: usize,
    columns: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CvReport> {
    if folds.len() != clips.len() {
        return Err(Error::LengthMismatch {
            left: folds.len(),
            right: clips.len(),
        });
    }
    let per_fold = par::map_range(k, |f| -> Result<Vec<(usize, Prediction)>> {
        let training: Vec<LabeledClip> = clips
            .iter()
            .zip(folds)
            .filter(|(c, &cf)| cf != f && c.label.is_class())
            .map(|(c, _)| c.clone())
            .collect();
        let model = train(&training, columns, cfg, par::derive_seed(seed, f as u64))?;
        clips
            .iter()
            .enumerate()
            .filter(|(i, _)| folds[*i] == f)
            .map(|(i, c)| Ok((i, model.predict(&c.features)?)))
            .collect()
    });
    let mut predictions: Vec<Option<Prediction>> = vec![None; clips.len()];
    let mut fold_reports = Vec::with_capacity(k);
    for fold in per_fold {
        let fold = fold?;
        let pred: Vec<Label> = fold.iter().map(|(_, p)| p.label).collect();
        let truth: Vec<Label> = fold.iter().map(|(i, _)| clips[*i].label).collect();
        fold_reports.push(cls_evaluate(&pred, &truth)?);
        for (i, p) in fold {
            predictions[i] = Some(p);
        }
    }
    let predictions: Vec<Prediction> = predictions
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::InsufficientData("clip without a fold".into())))
        .collect::<Result<_>>()?;
    let pred: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let truth: Vec<Label> = clips.iter().map(|c| c.label).collect();
    let pooled = cls_evaluate(&pred, &truth)?;
    Ok(CvReport {
        k,
        folds: folds.to_vec(),
        predictions,
        fold_reports,
        pooled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    /// Every gated segment is scored as `InteractionPresent`.
    Occurrence,
    /// Every gated segment receives the training majority class.
    Majority,
}

/// Most frequent interaction class; ties go to the lowest class.
pub fn majority_label(labels: &[Label]) -> Option<Label> {
    Label::CLASSES
        .iter()
        .map(|c| (labels.iter().filter(|l| *l == c).count(), *c))
        .filter(|(n, _)| *n > 0)
        .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

pub fn baseline_predict(gated: bool, variant: BaselineVariant, majority: Label) -> Prediction {
    let label = match (gated, variant) {
        (false, _) => Label::NoInteraction,
        (true, BaselineVariant::Occurrence) => Label::InteractionPresent,
        (true, BaselineVariant::Majority) => majority,
    };
    Prediction {
        label,
        confidence: if gated { 1.0 } else { 0.0 },
        scores: vec![ClassScore {
            label,
            votes: 1,
            margin: 0.0,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    fn keys(names: &[(&str, &str)]) -> Vec<GroupKey> {
        names.iter().map(|(a, b)| GroupKey::new(*a, *b)).collect()
    }

    #[test]
    fn one_group_per_fold() {
        let g = keys(&[("a", "b"), ("c", "d"), ("e", "f"), ("g", "h"), ("i", "j")]);
        let labels = vec![LickGroom, Headbutt, Displacement, LickGroom, Headbutt];
        let folds = assign_folds(&g, &labels, 5, 1).unwrap();
        let mut sorted = folds.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_group_is_error() {
        let g = keys(&[("a", "b"); 10]);
        assert!(matches!(
            assign_folds(&g, &[LickGroom; 10], 5, 0),
            Err(Error::TooFewGroups { needed: 5, found: 1 })
        ));
    }

    #[test]
    fn disjoint_identities_do_not_leak() {
        let mut g = Vec::new();
        let mut labels = Vec::new();
        for d in 0..10 {
            for j in 0..(3 + d % 4) {
                g.push(GroupKey::new(format!("a{d}"), format!("b{d}")));
                labels.push(Label::CLASSES[(d + j) % 3]);
            }
        }
        let folds = assign_folds(&g, &labels, 5, 3).unwrap();
        let mut seen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (k, f) in g.iter().zip(&folds) {
            for m in k.members() {
                seen.entry(m.to_string()).or_default().insert(*f);
            }
        }
        assert!(seen.values().all(|s| s.len() == 1));
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_predict(false, BaselineVariant::Majority, LickGroom).label, NoInteraction);
        assert_eq!(baseline_predict(true, BaselineVariant::Majority, LickGroom).label, LickGroom);
        assert_eq!(
            baseline_predict(true, BaselineVariant::Occurrence, LickGroom).label,
            InteractionPresent
        );
        assert_eq!(majority_label(&[Headbutt, LickGroom, Headbutt]), Some(Headbutt));
        assert_eq!(majority_label(&[Displacement, LickGroom]), Some(LickGroom));
        assert_eq!(majority_label(&[NoInteraction]), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn folds_partition_groups(assign in proptest::collection::vec((0usize..12, 0usize..3), 5..80), seed in 0u64..1000) {
            let g: Vec<GroupKey> = assign.iter().map(|(d, _)| GroupKey::new(format!("c{}", d % 6), format!("c{}", 6 + d / 2))).collect();
            let labels: Vec<Label> = assign.iter().map(|(_, c)| Label::CLASSES[*c]).collect();
            let distinct: BTreeSet<&GroupKey> = g.iter().collect();
            match assign_folds(&g, &labels, 5, seed) {
                Err(Error::TooFewGroups { .. }) => prop_assert!(distinct.len() < 5),
                Err(e) => prop_assert!(false, "{e}"),
                Ok(folds) => {
                    let mut fold_of: BTreeMap<&GroupKey, usize> = BTreeMap::new();
                    for (k, f) in g.iter().zip(&folds) {
                        prop_assert!(*f < 5);
                        prop_assert_eq!(*fold_of.entry(k).or_insert(*f), *f);
                    }
                    for f in 0..5 {
                        prop_assert!(folds.contains(&f));
                    }
                    prop_assert_eq!(&folds, &assign_folds(&g, &labels, 5, seed).unwrap());
                }
            }
        }
    }
}
