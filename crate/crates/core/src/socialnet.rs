//! Weighted undirected interaction graphs over individuals.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::svm::GroupKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub pair: GroupKey,
    pub label: Label,
    /// Inclusive frame span.
    pub frame_span: (u64, u64),
    pub confidence: f64,
}

impl InteractionEvent {
    fn len(&self) -> u64 {
        self.frame_span.1 - self.frame_span.0 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Affiliative,
    Agonistic,
    Combined,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Affiliative, Layer::Agonistic, Layer::Combined];

    pub fn includes(self, label: Label) -> bool {
        match self {
            Layer::Affiliative => label.is_affiliative(),
            Layer::Agonistic => label.is_agonistic(),
            Layer::Combined => label.is_class(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Affiliative => "affiliative",
            Layer::Agonistic => "agonistic",
            Layer::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// One unit per merged event.
    Count,
    /// Sum of merged-event confidences.
    Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub weight: WeightMode,
    /// Same-pair same-label events separated by at most this many seconds
    /// are merged.
    pub merge_gap_s: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            weight: WeightMode::Count,
            merge_gap_s: 1.0,
        }
    }
}

/// Collapses overlapping or near-abutting events of the same pair and
/// label. Merged confidence is the frame-weighted mean.
pub fn merge_events(events: &[InteractionEvent], fps: f64, max_gap_s: f64) -> Vec<InteractionEvent> {
    let mut sorted: Vec<&InteractionEvent> = events.iter().filter(|e| e.label.is_class()).collect();
    sorted.sort_by(|a, b| {
        (&a.pair, a.label, a.frame_span).cmp(&(&b.pair, b.label, b.frame_span))
    });
    let mut out: Vec<(InteractionEvent, f64, u64)> = Vec::new();
    for e in sorted {
        if let Some((cur, wsum, n)) = out.last_mut() {
            let gap_s = (e.frame_span.0 as f64 - cur.frame_span.1 as f64) / fps;
            if cur.pair == e.pair && cur.label == e.label && gap_s <= max_gap_s {
                cur.frame_span.1 = cur.frame_span.1.max(e.frame_span.1);
                *wsum += e.confidence * e.len() as f64;
                *n += e.len();
                continue;
            }
        }
        out.push((e.clone(), e.confidence * e.len() as f64, e.len()));
    }
    out.into_iter()
        .map(|(mut e, wsum, n)| {
            e.confidence = wsum / n as f64;
            e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    pub layer: Layer,
    /// Sorted lexicographically.
    pub nodes: Vec<String>,
    /// Positive-weight edges keyed by ordered name pair.
    pub edges: BTreeMap<GroupKey, f64>,
}

impl SocialGraph {
    pub fn weight(&self, a: &str, b: &str) -> f64 {
        self.edges.get(&GroupKey::new(a, b)).copied().unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }

    /// Adjacency lists of (neighbor index, weight).
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let ix = self.index();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, &w) in &self.edges {
            if w <= 0.0 {
                continue;
            }
            let (a, b) = (ix[k.0.as_str()], ix[k.1.as_str()]);
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }
}

/// Builds one layer from already classified events. Nodes are the roster
/// plus every identity appearing in an event.
pub fn build(
    events: &[InteractionEvent],
    roster: &[String],
    layer: Layer,
    cfg: &NetworkConfig,
    fps: f64,
) -> SocialGraph {
    let merged = merge_events(events, fps, cfg.merge_gap_s);
    let mut nodes: BTreeSet<String> = roster.iter().cloned().collect();
    let mut edges: BTreeMap<GroupKey, f64> = BTreeMap::new();
    for e in &merged {
        nodes.insert(e.pair.0.clone());
        nodes.insert(e.pair.1.clone());
        if !layer.includes(e.label) {
            continue;
        }
        let w = match cfg.weight {
            WeightMode::Count => 1.0,
            WeightMode::Confidence => e.confidence,
        };
        *edges.entry(e.pair.clone()).or_insert(0.0) += w;
    }
    edges.retain(|_, w| *w > 0.0);
    SocialGraph {
        layer,
        nodes: nodes.into_iter().collect(),
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub id: String,
    pub degree: usize,
    pub weighted_degree: f64,
    pub betweenness: f64,
    pub clustering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub layer: Layer,
    pub nodes: Vec<NodeMetrics>,
    pub density: f64,
    pub edge_count: usize,
    pub total_weight: f64,
}

const TIE_EPS: f64 = 1e-9;

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Normalized betweenness with edge length 1/weight (Brandes accumulation
/// over Dijkstra shortest-path DAGs). Path lengths equal within a relative
/// 1e-9 count as ties.
pub fn betweenness(adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        sigma[s] = 1.0;
        dist[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, s));
        while let Some(Entry(d, v)) = heap.pop() {
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            stack.push(v);
            for &(w, weight) in &adj[v] {
                let nd = d + 1.0 / weight;
                if done[w] {
                    continue;
                }
                if dist[w].is_finite() && same_length(nd, dist[w]) {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                } else if nd < dist[w] {
                    dist[w] = nd;
                    sigma[w] = sigma[v];
                    preds[w] = vec![v];
                    heap.push(Entry(nd, w));
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // each unordered pair was counted from both endpoints
    let pairs = if n > 2 { ((n - 1) * (n - 2)) as f64 / 2.0 } else { 1.0 };
    cb.iter().map(|c| c / 2.0 / pairs).collect()
}

pub fn metrics(g: &SocialGraph) -> NetworkMetrics {
    let adj = g.adjacency();
    let n = g.nodes.len();
    let bc = betweenness(&adj);
    let neighbor_sets: Vec<BTreeSet<usize>> = adj.iter().map(|a| a.iter().map(|(w, _)| *w).collect()).collect();
    let nodes = (0..n)
        .map(|v| {
            let nb: Vec<usize> = neighbor_sets[v].iter().copied().collect();
            let deg = nb.len();
            let clustering = if deg < 2 {
                0.0
            } else {
                let mut links = 0usize;
                for i in 0..deg {
                    for j in i + 1..deg {
                        if neighbor_sets[nb[i]].contains(&nb[j]) {
                            links += 1;
                        }
                    }
                }
                links as f64 / (deg * (deg - 1) / 2) as f64
            };
            NodeMetrics {
                id: g.nodes[v].clone(),
                degree: deg,
                weighted_degree: adj[v].iter().map(|(_, w)| w).sum(),
                betweenness: bc[v],
                clustering,
            }
        })
        .collect();
    let edge_count = g.edges.values().filter(|w| **w > 0.0).count();
    let density = if n < 2 {
        0.0
    } else {
        2.0 * edge_count as f64 / (n * (n - 1)) as f64
    };
    NetworkMetrics {
        layer: g.layer,
        nodes,
        density,
        edge_count,
        total_weight: g.total_weight(),
    }
}
