//! Node embeddings for the zoo graph: biased random walks with skip-gram
//! (Node2Vec, Node2Vec+) and one-layer GNNs trained for link prediction.

pub mod gnn;
pub mod skipgram;
pub mod walk;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_real, CsvOut, Table};
use crate::zoograph::{NodeKind, NodeRef, ZooGraph};
use crate::Real;

pub use gnn::{GnnConfig, GnnKind, GnnParams};
pub use walk::WalkVariant;

pub const NODE_EMBEDDINGS_FILE: &str = "embeddings_nodes.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub p: Real,
    pub q: Real,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: Real,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            walk_length: 40,
            walks_per_node: 10,
            window: 5,
            negatives_per_positive: 5,
            dim: 128,
            epochs: 5,
            learning_rate: 0.025,
            seed: 42,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.q > 0.0 && self.p.is_finite() && self.q.is_finite()) {
            return Err(Error::InvalidConfig(format!("p = {}, q = {} must be positive", self.p, self.q)));
        }
        for (name, v) in [
            ("walk_length", self.walk_length),
            ("walks_per_node", self.walks_per_node),
            ("window", self.window),
            ("negatives_per_positive", self.negatives_per_positive),
            ("dim", self.dim),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One vector per graph node, all of the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<NodeRef, Vec<Real>>,
}

impl EmbeddingTable {
    pub fn new(vectors: BTreeMap<NodeRef, Vec<Real>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        for (node, v) in &vectors {
            if v.len() != dim {
                return Err(Error::Shape(format!("embedding of {node} has width {}, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("non-finite embedding for {node}")));
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Pairs `nodes[i]` with `rows[i]`.
    pub fn from_rows(nodes: &[NodeRef], rows: &[Vec<Real>]) -> Result<Self> {
        if nodes.len() != rows.len() {
            return Err(Error::Shape(format!("{} nodes but {} vectors", nodes.len(), rows.len())));
        }
        Self::new(nodes.iter().cloned().zip(rows.iter().cloned()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, node: &NodeRef) -> Option<&[Real]> {
        self.vectors.get(node).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeRef, &Vec<Real>)> {
        self.vectors.iter()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["kind".to_owned(), "id".to_owned()];
        header.extend((0..self.dim).map(|k| format!("v{k}")));
        let mut out = CsvOut::create(path, &header)?;
        for (node, v) in &self.vectors {
            let mut row = vec![node.kind.to_string(), node.id.clone()];
            row.extend(v.iter().map(|&x| fmt_real(x)));
            out.row(&row)?;
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let table = Table::read(path)?;
        if table.header.len() < 2 || table.header[0] != "kind" || table.header[1] != "id" {
            return Err(table.parse_error(1, "expected header kind,id,v0,..."));
        }
        let dim = table.header.len() - 2;
        let mut vectors = BTreeMap::new();
        for (line, rec) in &table.rows {
            let kind = match table.field(*line, rec, 0)? {
                "dataset" => NodeKind::Dataset,
                "model" => NodeKind::Model,
                other => return Err(table.parse_error(*line, format!("unknown node kind {other:?}"))),
            };
            let id = table.field(*line, rec, 1)?.to_owned();
            let v = (0..dim).map(|k| table.parse(*line, rec, k + 2)).collect::<Result<Vec<Real>>>()?;
            if vectors.insert(NodeRef { kind, id }, v).is_some() {
                return Err(table.parse_error(*line, "duplicate node"));
            }
        }
        Self::new(vectors)
    }
}

/// Graph learner used to embed nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedder {
    Node2vec,
    Node2vecPlus,
    Graphsage,
    Gat,
}

impl Embedder {
    pub const ALL: [Embedder; 4] = [Embedder::Node2vec, Embedder::Node2vecPlus, Embedder::Graphsage, Embedder::Gat];
}

impl fmt::Display for Embedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Embedder::Node2vec => "node2vec",
            Embedder::Node2vecPlus => "node2vec_plus",
            Embedder::Graphsage => "graphsage",
            Embedder::Gat => "gat",
        })
    }
}

impl FromStr for Embedder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "node2vec" => Ok(Embedder::Node2vec),
            "node2vec_plus" | "node2vec+" => Ok(Embedder::Node2vecPlus),
            "graphsage" | "sage" => Ok(Embedder::Graphsage),
            "gat" => Ok(Embedder::Gat),
            _ => Err(Error::InvalidConfig(format!("unknown embedder {s:?}"))),
        }
    }
}

/// Embeds every node of `graph` with the chosen learner.
pub fn embed_graph(graph: &ZooGraph, method: Embedder, walk_cfg: &WalkConfig, gnn_cfg: &GnnConfig) -> Result<EmbeddingTable> {
    match method {
        Embedder::Node2vec | Embedder::Node2vecPlus => {
            let variant = if method == Embedder::Node2vec {
                WalkVariant::Node2vec
            } else {
                WalkVariant::Node2vecPlus
            };
            let wg = walk::WalkGraph::from_graph(graph);
            let walks = walk::sample_walks(&wg, walk_cfg, variant)?;
            let out = skipgram::train_skipgram(&walks, graph.nodes().len(), walk_cfg)?;
            EmbeddingTable::from_rows(graph.nodes(), &out.vectors)
        }
        Embedder::Graphsage => Ok(gnn::train_linkpred(graph, GnnKind::GraphSage, gnn_cfg)?.0),
        Embedder::Gat => Ok(gnn::train_linkpred(graph, GnnKind::Gat, gnn_cfg)?.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedder_names_round_trip() {
        for e in Embedder::ALL {
            assert_eq!(e.to_string().parse::<Embedder>().unwrap(), e);
        }
        assert_eq!("node2vec+".parse::<Embedder>().unwrap(), Embedder::Node2vecPlus);
        assert!("deepwalk".parse::<Embedder>().is_err());
    }

    #[test]
    fn table_csv_round_trip_is_exact() {
        let mut m = BTreeMap::new();
        m.insert(NodeRef::model("m1"), vec![0.1, -1.0 / 3.0, 1e-300]);
        m.insert(NodeRef::dataset("d,1"), vec![f64::MAX, 0.0, -2.5]);
        let t = EmbeddingTable::new(m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        t.write_csv(&path).unwrap();
        assert_eq!(EmbeddingTable::read_csv(&path).unwrap(), t);
    }

    #[test]
    fn ragged_or_nonfinite_tables_rejected() {
        let mut m = BTreeMap::new();
        m.insert(NodeRef::model("a"), vec![1.0]);
        m.insert(NodeRef::model("b"), vec![1.0, 2.0]);
        assert!(matches!(EmbeddingTable::new(m), Err(Error::Shape(_))));
        let mut m = BTreeMap::new();
        m.insert(NodeRef::model("a"), vec![f64::NAN]);
        assert!(EmbeddingTable::new(m).is_err());
    }

    #[test]
    fn walk_config_validation() {
        assert!(WalkConfig::default().validate().is_ok());
        assert!(WalkConfig { p: 0.0, ..Default::default() }.validate().is_err());
        assert!(WalkConfig { dim: 0, ..Default::default() }.validate().is_err());
    }
}
