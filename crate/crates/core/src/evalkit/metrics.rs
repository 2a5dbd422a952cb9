//! Multiclass classification metrics.

use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsReport {
    /// Row and column order of `confusion`: the sorted union of true and
    /// predicted labels.
    pub labels: Vec<Label>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Mean F1 over labels with nonzero support.
    pub macro_f1: f64,
    /// `confusion[t][p]` counts samples of true label `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

impl ClsReport {
    pub fn class(&self, label: Label) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn cls_evaluate(predictions: &[Label], truth: &[Label]) -> Result<ClsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let mut labels: Vec<Label> = predictions.iter().chain(truth).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let pos = |l: Label| labels.binary_search(&l).expect("label in union");
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, t) in predictions.iter().zip(truth) {
        confusion[pos(*t)][pos(*p)] += 1;
    }
    let total = truth.len();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = confusion[i][i];
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = (0..k).map(|r| confusion[r][i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: labels[i],
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    // labels that only ever appear as predictions are not averaged
    let supported: Vec<f64> = per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
    let macro_f1 = if supported.is_empty() {
        0.0
    } else {
        supported.iter().sum::<f64>() / supported.len() as f64
    };
    Ok(ClsReport {
        labels,
        accuracy: ratio(correct, total),
        per_class,
        macro_f1,
        confusion,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn all_correct() {
        let y = [LickGroom, Headbutt, Displacement, Headbutt];
        let r = cls_evaluate(&y, &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn one_flip_of_ten() {
        let truth: Vec<Label> = (0..10).map(|i| if i < 5 { LickGroom } else { Headbutt }).collect();
        let mut pred = truth.clone();
        pred[0] = Headbutt;
        let r = cls_evaluate(&pred, &truth).unwrap();
        assert!((r.accuracy - 0.9).abs() < 1e-15);
        assert_eq!(r.confusion, vec![vec![4, 1], vec![0, 5]]);
    }

    #[test]
    fn rejection_counts_against_true_class() {
        let r = cls_evaluate(&[NoInteraction, LickGroom], &[LickGroom, LickGroom]).unwrap();
        assert_eq!(r.labels, vec![LickGroom, NoInteraction]);
        assert_eq!(r.class(LickGroom).unwrap().recall, 0.5);
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(cls_evaluate(&[LickGroom], &[]), Err(Error::LengthMismatch { .. })));
    }

    proptest::proptest! {
        #[test]
        fn supports_and_trace(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let all = [LickGroom, Headbutt, Displacement, NoInteraction];
            let pred: Vec<Label> = pairs.iter().map(|p| all[p.0]).collect();
            let truth: Vec<Label> = pairs.iter().map(|p| all[p.1]).collect();
            let r = cls_evaluate(&pred, &truth).unwrap();
            let support: usize = r.per_class.iter().map(|c| c.support).sum();
            proptest::prop_assert_eq!(support, truth.len());
            for (i, c) in r.per_class.iter().enumerate() {
                proptest::prop_assert_eq!(r.confusion[i].iter().sum::<usize>(), c.support);
            }
            let trace: usize = (0..r.labels.len()).map(|i| r.confusion[i][i]).sum();
            proptest::prop_assert!((r.accuracy - trace as f64 / truth.len() as f64).abs() < 1e-15);
            let f1s: Vec<f64> = r.per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
            let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
            proptest::prop_assert!((r.macro_f1 - mean).abs() < 1e-15);
        }
    }
}
