//! Weighted, edge-typed graph over model and dataset nodes.
//!
//! Three edge kinds exist:
//!
//! * `dd_similarity` between datasets, weight `φ ∈ [−1, 1]`, stored once per
//!   direction;
//! * `md_performance` from training history, weight = per-dataset min-max
//!   normalized accuracy, labeled positive at or above threshold and kept as
//!   a labeled negative below it;
//! * `md_transfer` from transferability scores, per-dataset min-max
//!   normalized, present only at or above threshold.
//!
//! Model-dataset edges are stored once with the dataset as `a` and the model
//! as `b`, and are traversed in both directions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_real, CsvOut};
use crate::registry::{RecordKind, TrainingRecord, Zoo};
use crate::simfeat::SimilarityMatrix;
use crate::transferability::TransferMethod;
use crate::Real;

pub const GRAPH_FILE: &str = "graph.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Dataset,
    Model,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Dataset => "dataset",
            NodeKind::Model => "model",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeRef {
    pub fn model(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Model,
            id: id.into(),
        }
    }

    pub fn dataset(id: impl Into<String>) -> Self {
        Self {
            kind: NodeKind::Dataset,
            id: id.into(),
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    DdSimilarity,
    MdPerformance,
    MdTransfer,
}

impl EdgeKind {
    pub fn is_model_dataset(self) -> bool {
        !matches!(self, EdgeKind::DdSimilarity)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::DdSimilarity => "dd_similarity",
            EdgeKind::MdPerformance => "md_performance",
            EdgeKind::MdTransfer => "md_transfer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Positive,
    Negative,
    Unlabeled,
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeLabel::Positive => "positive",
            EdgeLabel::Negative => "negative",
            EdgeLabel::Unlabeled => "unlabeled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEdge {
    pub a: NodeRef,
    pub b: NodeRef,
    pub kind: EdgeKind,
    pub weight: Real,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub transfer_prune_threshold: Real,
    pub accuracy_prune_threshold: Real,
    pub negative_accuracy_threshold: Real,
    /// When false, only dataset pairs with positive similarity are linked.
    pub dd_fully_connected: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            transfer_prune_threshold: 0.5,
            accuracy_prune_threshold: 0.5,
            negative_accuracy_threshold: 0.5,
            dd_fully_connected: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transfer_prune_threshold", self.transfer_prune_threshold),
            ("accuracy_prune_threshold", self.accuracy_prune_threshold),
            ("negative_accuracy_threshold", self.negative_accuracy_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// Label of a performance edge with normalized weight `w`.
    pub fn performance_label(&self, w: Real) -> EdgeLabel {
        if w >= self.negative_accuracy_threshold && w >= self.accuracy_prune_threshold {
            EdgeLabel::Positive
        } else {
            EdgeLabel::Negative
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZooGraph {
    nodes: Vec<NodeRef>,
    edges: Vec<ZooEdge>,
    node_features: BTreeMap<NodeRef, Vec<Real>>,
    index: BTreeMap<NodeRef, usize>,
}

impl ZooGraph {
    /// Assembles a graph, checking endpoints, self-loops and duplicates.
    pub fn from_parts(nodes: Vec<NodeRef>, edges: Vec<ZooEdge>) -> Result<Self> {
        let index: BTreeMap<NodeRef, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::Integrity("duplicate graph node".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            for end in [&e.a, &e.b] {
                if !index.contains_key(end) {
                    return Err(Error::Integrity(format!("edge endpoint {end} is not a node")));
                }
            }
            if e.a == e.b {
                return Err(Error::Integrity(format!("self-loop on {}", e.a)));
            }
            let ok_kinds = match e.kind {
                EdgeKind::DdSimilarity => e.a.kind == NodeKind::Dataset && e.b.kind == NodeKind::Dataset,
                _ => e.a.kind != e.b.kind,
            };
            if !ok_kinds {
                return Err(Error::Integrity(format!("{} edge between {} and {}", e.kind, e.a, e.b)));
            }
            if !e.weight.is_finite() {
                return Err(Error::Integrity(format!("non-finite weight on {}-{}", e.a, e.b)));
            }
            if !seen.insert((&e.a, &e.b, e.kind)) {
                return Err(Error::Integrity(format!("duplicate {} edge {}-{}", e.kind, e.a, e.b)));
            }
        }
        Ok(Self {
            nodes,
            edges,
            node_features: BTreeMap::new(),
            index,
        })
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ZooEdge] {
        &self.edges
    }

    pub fn node_features(&self) -> &BTreeMap<NodeRef, Vec<Real>> {
        &self.node_features
    }

    pub fn node_index(&self, node: &NodeRef) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn with_node_features(mut self, features: BTreeMap<NodeRef, Vec<Real>>) -> Result<Self> {
        if let Some(n) = features.keys().find(|n| !self.index.contains_key(n)) {
            return Err(Error::Integrity(format!("feature for unknown node {n}")));
        }
        self.node_features = features;
        Ok(self)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["a_kind", "a_id", "b_kind", "b_id", "edge_kind", "weight", "label"])?;
        for e in &self.edges {
            out.row(&[
                e.a.kind.to_string(),
                e.a.id.clone(),
                e.b.kind.to_string(),
                e.b.id.clone(),
                e.kind.to_string(),
                fmt_real(e.weight),
                e.label.to_string(),
            ])?;
        }
        out.finish()
    }
}

/// Per-dataset min-max normalization of accuracies, keyed by model id.
/// A dataset whose accuracies are all equal maps every model to 1.0.
pub fn normalize_accuracy(history: &[&TrainingRecord]) -> BTreeMap<String, Real> {
    min_max(history.iter().map(|r| (r.model_id.as_str(), r.accuracy)))
}

fn min_max<'a>(values: impl Iterator<Item = (&'a str, Real)> + Clone) -> BTreeMap<String, Real> {
    let lo = values.clone().map(|(_, v)| v).fold(Real::INFINITY, Real::min);
    let hi = values.clone().map(|(_, v)| v).fold(Real::NEG_INFINITY, Real::max);
    values
        .map(|(id, v)| {
            let w = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
            (id.to_owned(), w)
        })
        .collect()
}

/// Merges pretrain and fine-tune records into one accuracy per
/// `(model, dataset)`; fine-tune wins when both exist.
fn performance_records(history: &[TrainingRecord]) -> BTreeMap<(&str, &str), &TrainingRecord> {
    let mut out: BTreeMap<(&str, &str), &TrainingRecord> = BTreeMap::new();
    for r in history {
        let key = (r.dataset_id.as_str(), r.model_id.as_str());
        match out.get(&key) {
            Some(prev) if prev.kind == RecordKind::Finetune => {}
            _ => {
                out.insert(key, r);
            }
        }
    }
    out
}

/// Normalized transferability per `(dataset, model)`; LogME scores take
/// precedence over ingested ones for the same pair.
pub fn normalized_transfer_scores(zoo: &Zoo) -> BTreeMap<(String, String), Real> {
    let mut chosen: BTreeMap<(&str, &str), (TransferMethod, Real)> = BTreeMap::new();
    for t in zoo.transfer_scores() {
        let key = (t.dataset_id.as_str(), t.model_id.as_str());
        match chosen.get(&key) {
            Some((TransferMethod::Logme, _)) => {}
            _ => {
                chosen.insert(key, (t.method, t.score));
            }
        }
    }
    let mut by_dataset: BTreeMap<&str, Vec<(&str, Real)>> = BTreeMap::new();
    for ((d, m), (_, s)) in &chosen {
        by_dataset.entry(d).or_default().push((m, *s));
    }
    let mut out = BTreeMap::new();
    for (d, scores) in by_dataset {
        for (m, w) in min_max(scores.iter().copied()) {
            out.insert((d.to_owned(), m), w);
        }
    }
    out
}

pub fn build_graph(zoo: &Zoo, phi: &SimilarityMatrix, config: &GraphConfig) -> Result<ZooGraph> {
    config.validate()?;
    for r in zoo.history() {
        if !phi.contains(&r.dataset_id) {
            return Err(Error::Integrity(format!(
                "dataset {} in history has no similarity entry",
                r.dataset_id
            )));
        }
    }

    let mut nodes: Vec<NodeRef> = zoo.datasets().iter().map(|d| NodeRef::dataset(&d.dataset_id)).collect();
    nodes.extend(zoo.models().iter().map(|m| NodeRef::model(&m.model_id)));

    let mut edges = Vec::new();
    let in_phi: Vec<&str> = zoo
        .datasets()
        .iter()
        .map(|d| d.dataset_id.as_str())
        .filter(|d| phi.contains(d))
        .collect();
    for &a in &in_phi {
        for &b in &in_phi {
            if a == b {
                continue;
            }
            let w = phi.get(a, b).expect("both ids present");
            if config.dd_fully_connected || w > 0.0 {
                edges.push(ZooEdge {
                    a: NodeRef::dataset(a),
                    b: NodeRef::dataset(b),
                    kind: EdgeKind::DdSimilarity,
                    weight: w,
                    label: EdgeLabel::Positive,
                });
            }
        }
    }

    let merged = performance_records(zoo.history());
    let mut by_dataset: BTreeMap<&str, Vec<&TrainingRecord>> = BTreeMap::new();
    for r in merged.values() {
        by_dataset.entry(r.dataset_id.as_str()).or_default().push(r);
    }
    for d in zoo.datasets() {
        let Some(records) = by_dataset.get(d.dataset_id.as_str()) else {
            continue;
        };
        let norm = normalize_accuracy(records);
        for r in records {
            let w = norm[&r.model_id];
            edges.push(ZooEdge {
                a: NodeRef::dataset(&r.dataset_id),
                b: NodeRef::model(&r.model_id),
                kind: EdgeKind::MdPerformance,
                weight: w,
                label: config.performance_label(w),
            });
        }
    }

    let transfer = normalized_transfer_scores(zoo);
    for d in zoo.datasets() {
        for m in zoo.models() {
            let Some(&w) = transfer.get(&(d.dataset_id.clone(), m.model_id.clone())) else {
                continue;
            };
            if w >= config.transfer_prune_threshold {
                edges.push(ZooEdge {
                    a: NodeRef::dataset(&d.dataset_id),
                    b: NodeRef::model(&m.model_id),
                    kind: EdgeKind::MdTransfer,
                    weight: w,
                    label: EdgeLabel::Positive,
                });
            }
        }
    }

    ZooGraph::from_parts(nodes, edges)
}

/// Copy of `graph` without model-dataset edges touching `target`.
/// Dataset-dataset edges are kept.
pub fn remove_target_edges(graph: &ZooGraph, target: &str) -> Result<ZooGraph> {
    let t = NodeRef::dataset(target);
    if graph.node_index(&t).is_none() {
        return Err(Error::NotFound(format!("dataset node {target}")));
    }
    let edges = graph
        .edges
        .iter()
        .filter(|e| !(e.kind.is_model_dataset() && (e.a == t || e.b == t)))
        .cloned()
        .collect();
    Ok(ZooGraph {
        edges,
        ..graph.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::fixtures::{dataset, ft, model};
    use crate::transferability::TransferRecord;
    use approx::assert_abs_diff_eq;

    fn rec(m: &str, acc: f64) -> TrainingRecord {
        ft(m, "d", acc)
    }

    fn phi_for(ids: &[&str]) -> SimilarityMatrix {
        let k = ids.len();
        let phi = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.25 }).collect())
            .collect();
        SimilarityMatrix::from_parts(ids.iter().map(|s| s.to_string()).collect(), phi).unwrap()
    }

    /// Two datasets, two models, history on (d2,m1), (d1,m2), (d2,m2).
    pub(crate) fn example_two() -> (Zoo, SimilarityMatrix) {
        let zoo = Zoo::new(
            vec![model("m1", "resnet"), model("m2", "vit")],
            vec![dataset("d1"), dataset("d2")],
            vec![ft("m1", "d2", 0.7), ft("m2", "d1", 0.8), ft("m2", "d2", 0.3)],
            vec![],
            vec![],
        )
        .unwrap();
        (zoo, phi_for(&["d1", "d2"]))
    }

    fn pairs(g: &ZooGraph) -> BTreeSet<(String, String)> {
        g.edges().iter().map(|e| (e.a.id.clone(), e.b.id.clone())).collect()
    }

    #[test]
    fn normalize_hand_cases() {
        let recs = [rec("a", 0.2), rec("b", 0.6), rec("c", 1.0)];
        let n = normalize_accuracy(&recs.iter().collect::<Vec<_>>());
        assert_abs_diff_eq!(n["a"], 0.0);
        assert_abs_diff_eq!(n["b"], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(n["c"], 1.0);

        let single = [rec("a", 0.7)];
        assert_eq!(normalize_accuracy(&single.iter().collect::<Vec<_>>())["a"], 1.0);

        let recs = [rec("a", 0.3), rec("b", 0.4), rec("c", 0.8), rec("d", 0.9)];
        let n = normalize_accuracy(&recs.iter().collect::<Vec<_>>());
        assert_abs_diff_eq!(n["a"], 0.0);
        assert_abs_diff_eq!(n["b"], 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n["c"], 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n["d"], 1.0);
    }

    #[test]
    fn example_two_edge_set() {
        let (zoo, phi) = example_two();
        let g = build_graph(&zoo, &phi, &GraphConfig::default()).unwrap();
        let expected: BTreeSet<(String, String)> = [("d1", "d2"), ("d2", "d1"), ("d1", "m2"), ("d2", "m2"), ("d2", "m1")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(pairs(&g), expected);
        assert_eq!(g.count(EdgeKind::DdSimilarity), 2);
        // d2 holds 0.7 (m1) and 0.3 (m2): the weaker one becomes a negative.
        let neg: Vec<_> = g.edges().iter().filter(|e| e.label == EdgeLabel::Negative).collect();
        assert_eq!(neg.len(), 1);
        assert_eq!((neg[0].a.id.as_str(), neg[0].b.id.as_str()), ("d2", "m2"));
    }

    #[test]
    fn remove_target_on_example_two() {
        let (zoo, phi) = example_two();
        let g = build_graph(&zoo, &phi, &GraphConfig::default()).unwrap();
        let cut = remove_target_edges(&g, "d2").unwrap();
        let expected: BTreeSet<(String, String)> = [("d1", "d2"), ("d2", "d1"), ("d1", "m2")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(pairs(&cut), expected);
        assert_eq!(g.edges().len(), 5, "input graph untouched");
        assert!(matches!(remove_target_edges(&g, "nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn remove_target_without_md_edges_is_identity() {
        let zoo = Zoo::new(
            vec![model("m1", "resnet")],
            vec![dataset("d1"), dataset("d2")],
            vec![ft("m1", "d1", 0.5)],
            vec![],
            vec![],
        )
        .unwrap();
        let g = build_graph(&zoo, &phi_for(&["d1", "d2"]), &GraphConfig::default()).unwrap();
        assert_eq!(remove_target_edges(&g, "d2").unwrap(), g);
    }

    #[test]
    fn transfer_edges_are_pruned_below_threshold() {
        let scores = [("m1", 0.0), ("m2", 0.4), ("m3", 1.0)];
        let zoo = Zoo::new(
            vec![model("m1", "a"), model("m2", "a"), model("m3", "a")],
            vec![dataset("d1"), dataset("d2")],
            vec![],
            vec![],
            scores
                .iter()
                .map(|(m, s)| TransferRecord {
                    model_id: m.to_string(),
                    dataset_id: "d1".into(),
                    method: TransferMethod::Ingested,
                    score: *s,
                })
                .collect(),
        )
        .unwrap();
        let g = build_graph(&zoo, &phi_for(&["d1", "d2"]), &GraphConfig::default()).unwrap();
        let kept: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::MdTransfer)
            .map(|e| e.b.id.as_str())
            .collect();
        // Normalized weights 0.0, 0.4, 1.0: only m3 clears 0.5.
        assert_eq!(kept, vec!["m3"]);
    }

    #[test]
    fn finetune_wins_over_pretrain_for_same_pair() {
        let mut pre = ft("m1", "d1", 0.99);
        pre.kind = RecordKind::Pretrain;
        let zoo = Zoo::new(
            vec![model("m1", "a"), model("m2", "a")],
            vec![dataset("d1"), dataset("d2")],
            vec![pre, ft("m1", "d1", 0.2), ft("m2", "d1", 0.6)],
            vec![],
            vec![],
        )
        .unwrap();
        let g = build_graph(&zoo, &phi_for(&["d1", "d2"]), &GraphConfig::default()).unwrap();
        let m1 = g.edges().iter().find(|e| e.b.id == "m1").unwrap();
        assert_eq!(m1.weight, 0.0);
        assert_eq!(g.count(EdgeKind::MdPerformance), 2);
    }

    #[test]
    fn missing_similarity_is_integrity_error() {
        let (zoo, _) = example_two();
        let err = build_graph(&zoo, &phi_for(&["d1", "x"]), &GraphConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn invalid_threshold_rejected() {
        let (zoo, phi) = example_two();
        let cfg = GraphConfig {
            accuracy_prune_threshold: 1.5,
            ..GraphConfig::default()
        };
        assert!(matches!(build_graph(&zoo, &phi, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn labels_are_pure_function_of_inputs() {
        let (zoo, phi) = example_two();
        let a = build_graph(&zoo, &phi, &GraphConfig::default()).unwrap();
        let b = build_graph(&zoo, &phi, &GraphConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
