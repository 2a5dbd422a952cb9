//! Properties evaluated under `--check`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use herdgraph::evalkit::experiments::{AblationRow, BaselineComparison, FeatureSet, SensitivityRow};
use herdgraph::pipeline::NetworkLayer;
use herdgraph::socialnet::{self, InteractionEvent, Layer, NetworkConfig, WeightMode};
use herdgraph::svm::GroupKey;
use serde::Serialize;

pub const MIN_BASELINE_GAP: f64 = 0.15;
pub const MIN_ABLATION_DROP: f64 = 0.10;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn equal<T: PartialEq + Debug>(name: &str, rerun: &T, first: &T) -> Check {
    let same = rerun == first;
    Check::new(
        name,
        same,
        if same { "rerun identical" } else { "rerun differs" },
    )
}

pub fn baseline_gap(cmp: &BaselineComparison) -> Check {
    let gap = cmp.macro_f1_gap();
    Check::new(
        "baseline_macro_f1_gap",
        gap >= MIN_BASELINE_GAP,
        format!(
            "svm {:.4} vs proximity {:.4}, gap {gap:.4} (need >= {MIN_BASELINE_GAP})",
            cmp.svm.macro_f1, cmp.majority.macro_f1
        ),
    )
}

pub fn ablation_order(rows: &[AblationRow]) -> Vec<Check> {
    let f1 = |set: FeatureSet| rows.iter().find(|r| r.feature_set == set).map(|r| r.macro_f1);
    let (Some(full), Some(minus), Some(mean)) = (
        f1(FeatureSet::Full),
        f1(FeatureSet::MinusRateOfChange),
        f1(FeatureSet::MeanDistanceOnly),
    ) else {
        return vec![Check::new("ablation_order", false, "ablation rows missing")];
    };
    vec![
        Check::new(
            "ablation_order",
            full >= minus && minus >= mean,
            format!("full {full:.4} >= minus_rate_of_change {minus:.4} >= mean_distance_only {mean:.4}"),
        ),
        Check::new(
            "ablation_drop",
            full - mean >= MIN_ABLATION_DROP,
            format!("full - mean_distance_only = {:.4} (need >= {MIN_ABLATION_DROP})", full - mean),
        ),
    ]
}

/// Candidates never increase with a larger dwell nor decrease with a
/// larger distance factor.
pub fn sensitivity_grid(rows: &[SensitivityRow], alphas: &[f64], dwells: &[f64]) -> Vec<Check> {
    let expected = alphas.len() * dwells.len();
    let mut out = vec![Check::new(
        "sensitivity_rows",
        rows.len() == expected,
        format!("{} rows for a {}x{} grid", rows.len(), alphas.len(), dwells.len()),
    )];
    let cell = |a: f64, d: f64| rows.iter().find(|r| r.alpha == a && r.dwell_s == d).map(|r| r.candidates);
    let mut violations = Vec::new();
    for &a in alphas {
        for &d in dwells {
            let Some(c) = cell(a, d) else { continue };
            for &d2 in dwells.iter().filter(|&&d2| d2 > d) {
                if cell(a, d2).is_some_and(|c2| c2 > c) {
                    violations.push(format!("alpha {a}: dwell {d2} keeps more than {d}"));
                }
            }
            for &a2 in alphas.iter().filter(|&&a2| a2 > a) {
                if cell(a2, d).is_some_and(|c2| c2 < c) {
                    violations.push(format!("dwell {d}: alpha {a2} keeps fewer than {a}"));
                }
            }
        }
    }
    out.push(Check::new(
        "sensitivity_candidates_monotone",
        violations.is_empty(),
        if violations.is_empty() {
            "candidate counts monotone in both axes".to_string()
        } else {
            violations.join("; ")
        },
    ));
    out
}

fn mismatches(got: &BTreeMap<GroupKey, f64>, want: &BTreeMap<GroupKey, f64>) -> Vec<String> {
    let keys: BTreeSet<&GroupKey> = got.keys().chain(want.keys()).collect();
    keys.into_iter()
        .filter_map(|k| {
            let g = got.get(k).copied().unwrap_or(0.0);
            let w = want.get(k).copied().unwrap_or(0.0);
            ((g - w).abs() > EPS).then(|| format!("{}-{}: {g} vs {w}", k.0, k.1))
        })
        .collect()
}

/// Each layer's edges equal the weights of the merged events it admits,
/// and the combined layer is the sum of the other two.
pub fn edge_conservation(events: &[InteractionEvent], layers: &[NetworkLayer], cfg: &NetworkConfig, fps: f64) -> Vec<Check> {
    let merged = socialnet::merge_events(events, fps, cfg.merge_gap_s);
    let graph = |l: Layer| layers.iter().find(|n| n.graph.layer == l).map(|n| &n.graph.edges);
    let mut out = Vec::new();
    for layer in Layer::ALL {
        let mut want: BTreeMap<GroupKey, f64> = BTreeMap::new();
        for e in merged.iter().filter(|e| layer.includes(e.label)) {
            *want.entry(e.pair.clone()).or_default() += match cfg.weight {
                WeightMode::Count => 1.0,
                WeightMode::Confidence => e.confidence,
            };
        }
        let bad = match graph(layer) {
            Some(got) => mismatches(got, &want),
            None => vec!["layer missing".to_string()],
        };
        out.push(Check::new(
            &format!("edge_weights_{}", layer.as_str()),
            bad.is_empty(),
            if bad.is_empty() { format!("{} edges match merged events", want.len()) } else { bad.join("; ") },
        ));
    }
    if let (Some(aff), Some(ago), Some(comb)) =
        (graph(Layer::Affiliative), graph(Layer::Agonistic), graph(Layer::Combined))
    {
        let mut sum = aff.clone();
        for (k, w) in ago {
            *sum.entry(k.clone()).or_default() += w;
        }
        let bad = mismatches(comb, &sum);
        out.push(Check::new(
            "combined_is_sum_of_layers",
            bad.is_empty(),
            if bad.is_empty() { "combined = affiliative + agonistic on every edge".to_string() } else { bad.join("; ") },
        ));
    }
    out
}

/// Per layer and per edge, the merged-event counts from the pipeline equal
/// those of the ground truth.
pub fn ground_truth_conservation(
    gt: &[InteractionEvent],
    predicted: &[InteractionEvent],
    roster: &[String],
    cfg: &NetworkConfig,
    fps: f64,
) -> Vec<Check> {
    let count = NetworkConfig {
        weight: WeightMode::Count,
        ..cfg.clone()
    };
    Layer::ALL
        .into_iter()
        .map(|layer| {
            let want = socialnet::build(gt, roster, layer, &count, fps);
            let got = socialnet::build(predicted, roster, layer, &count, fps);
            let bad = mismatches(&got.edges, &want.edges);
            Check::new(
                &format!("ground_truth_edges_{}", layer.as_str()),
                bad.is_empty(),
                if bad.is_empty() {
                    format!("{} edges, {} events conserved", want.edges.len(), want.total_weight())
                } else {
                    bad.join("; ")
                },
            )
        })
        .collect()
}
