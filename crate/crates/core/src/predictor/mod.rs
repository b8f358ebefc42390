//! Per-(model, dataset) feature rows and the regressors that map them to
//! predicted fine-tuning accuracy.

pub mod forest;
pub mod gbm;
pub mod ridge;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::io::{fmt_opt_real, fmt_real, CsvOut};
use crate::linalg::Matrix;
use crate::registry::Zoo;
use crate::simfeat::SimilarityMatrix;
use crate::zoograph::{normalized_transfer_scores, NodeRef};
use crate::Real;

pub use forest::{Forest, ForestConfig};
pub use gbm::{Gbm, GbmConfig};
pub use ridge::Ridge;

pub const SCORES_FILE: &str = "scores.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const PREDICTOR_FILE: &str = "predictor.json";

/// Feature groups included in a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub use_metadata: bool,
    pub use_similarity: bool,
    pub use_transfer_score: bool,
    pub use_graph: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureSpec {
    pub const fn all() -> Self {
        Self {
            use_metadata: true,
            use_similarity: true,
            use_transfer_score: true,
            use_graph: true,
        }
    }

    pub const fn metadata_only() -> Self {
        Self {
            use_metadata: true,
            use_similarity: false,
            use_transfer_score: false,
            use_graph: false,
        }
    }

    pub const fn graph_only() -> Self {
        Self {
            use_metadata: false,
            use_similarity: false,
            use_transfer_score: false,
            use_graph: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.use_metadata || self.use_similarity || self.use_transfer_score || self.use_graph) {
            return Err(Error::InvalidConfig("feature spec selects no feature group".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub model_id: String,
    pub dataset_id: String,
    pub x: Vec<Real>,
    /// Fine-tune accuracy when known.
    pub y: Option<Real>,
}

/// Column layout with one-hot vocabularies frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub spec: FeatureSpec,
    pub architectures: Vec<String>,
    pub pretrained_datasets: Vec<String>,
    pub graph_dim: usize,
}

impl FeatureEncoder {
    /// Builds vocabularies from the cards of `models` (the training models).
    pub fn fit<'a>(zoo: &Zoo, models: impl IntoIterator<Item = &'a str>, spec: FeatureSpec, graph_dim: usize) -> Result<Self> {
        spec.validate()?;
        let mut arch = BTreeSet::new();
        let mut pre = BTreeSet::new();
        for id in models {
            let card = zoo.model(id).ok_or_else(|| Error::NotFound(format!("model {id}")))?;
            arch.insert(card.architecture.clone());
            if let Some(p) = &card.pretrained_dataset_id {
                pre.insert(p.clone());
            }
        }
        Ok(Self {
            spec,
            architectures: arch.into_iter().collect(),
            pretrained_datasets: pre.into_iter().collect(),
            graph_dim: if spec.use_graph { graph_dim } else { 0 },
        })
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut c = Vec::new();
        if self.spec.use_metadata {
            c.extend(
                [
                    "log10_num_samples",
                    "num_classes",
                    "input_shape",
                    "log10_num_params",
                    "memory_mb",
                    "pretrained_accuracy",
                ]
                .map(String::from),
            );
            c.extend(self.architectures.iter().map(|a| format!("arch={a}")));
            c.extend(self.pretrained_datasets.iter().map(|d| format!("pretrained={d}")));
        }
        if self.spec.use_similarity {
            c.push("similarity".into());
        }
        if self.spec.use_transfer_score {
            c.push("transfer_score".into());
            c.push("transfer_present".into());
        }
        if self.spec.use_graph {
            c.extend((0..self.graph_dim).map(|k| format!("gm{k}")));
            c.extend((0..self.graph_dim).map(|k| format!("gd{k}")));
        }
        c
    }

    pub fn width(&self) -> usize {
        self.column_names().len()
    }
}

/// Inputs shared by every row of one assembly pass.
pub struct FeatureContext<'a> {
    pub zoo: &'a Zoo,
    pub phi: &'a SimilarityMatrix,
    pub embeddings: Option<&'a EmbeddingTable>,
    transfer: BTreeMap<(String, String), Real>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(zoo: &'a Zoo, phi: &'a SimilarityMatrix, embeddings: Option<&'a EmbeddingTable>) -> Self {
        Self {
            zoo,
            phi,
            embeddings,
            transfer: normalized_transfer_scores(zoo),
        }
    }

    pub fn encode(&self, enc: &FeatureEncoder, model_id: &str, dataset_id: &str) -> Result<Vec<Real>> {
        let model = self
            .zoo
            .model(model_id)
            .ok_or_else(|| Error::NotFound(format!("model {model_id}")))?;
        let dataset = self
            .zoo
            .dataset(dataset_id)
            .ok_or_else(|| Error::NotFound(format!("dataset {dataset_id}")))?;
        let mut x = Vec::with_capacity(enc.width());
        if enc.spec.use_metadata {
            x.push((dataset.num_samples as Real).log10());
            x.push(dataset.num_classes as Real);
            x.push(model.input_shape as Real);
            x.push((model.num_params as Real + 1.0).log10());
            x.push(model.memory_mb);
            x.push(model.pretrained_accuracy.unwrap_or(0.0));
            x.extend(enc.architectures.iter().map(|a| Real::from(u8::from(*a == model.architecture))));
            x.extend(
                enc.pretrained_datasets
                    .iter()
                    .map(|d| Real::from(u8::from(model.pretrained_dataset_id.as_deref() == Some(d.as_str())))),
            );
        }
        if enc.spec.use_similarity {
            let phi = model
                .pretrained_dataset_id
                .as_deref()
                .and_then(|src| self.phi.get(src, dataset_id))
                .unwrap_or(0.0);
            x.push(phi);
        }
        if enc.spec.use_transfer_score {
            match self.transfer.get(&(dataset_id.to_owned(), model_id.to_owned())) {
                Some(&s) => x.extend([s, 1.0]),
                None => x.extend([0.0, 0.0]),
            }
        }
        if enc.spec.use_graph {
            let table = self
                .embeddings
                .ok_or_else(|| Error::MissingEmbedding("no embedding table supplied".into()))?;
            for node in [NodeRef::model(model_id), NodeRef::dataset(dataset_id)] {
                let v = table.get(&node).ok_or_else(|| Error::MissingEmbedding(node.to_string()))?;
                if v.len() != enc.graph_dim {
                    return Err(Error::Shape(format!(
                        "embedding of {node} has width {}, encoder expects {}",
                        v.len(),
                        enc.graph_dim
                    )));
                }
                x.extend_from_slice(v);
            }
        }
        Ok(x)
    }
}

/// Rows for `pairs` of `(model_id, dataset_id)`, labeled with fine-tune
/// accuracy where the zoo has one.
pub fn assemble_features(
    zoo: &Zoo,
    phi: &SimilarityMatrix,
    embeddings: Option<&EmbeddingTable>,
    pairs: &[(String, String)],
    encoder: &FeatureEncoder,
) -> Result<Vec<FeatureRow>> {
    let ctx = FeatureContext::new(zoo, phi, embeddings);
    pairs
        .iter()
        .map(|(m, d)| {
            Ok(FeatureRow {
                model_id: m.clone(),
                dataset_id: d.clone(),
                x: ctx.encode(encoder, m, d)?,
                y: zoo.finetune_accuracy(m, d),
            })
        })
        .collect()
}

pub fn write_feature_rows(path: &Path, encoder: &FeatureEncoder, rows: &[FeatureRow]) -> Result<()> {
    let mut header = vec!["model_id".to_owned(), "dataset_id".to_owned()];
    header.extend(encoder.column_names());
    header.push("y".into());
    let mut out = CsvOut::create(path, &header)?;
    for r in rows {
        let mut line = vec![r.model_id.clone(), r.dataset_id.clone()];
        line.extend(r.x.iter().map(|&v| fmt_real(v)));
        line.push(fmt_opt_real(r.y));
        out.row(&line)?;
    }
    out.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Ridge,
    Forest,
    Gbm,
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorKind::Ridge => "ridge",
            PredictorKind::Forest => "forest",
            PredictorKind::Gbm => "gbm",
        })
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" | "lr" => Ok(PredictorKind::Ridge),
            "forest" | "rf" => Ok(PredictorKind::Forest),
            "gbm" | "xgb" => Ok(PredictorKind::Gbm),
            _ => Err(Error::InvalidConfig(format!("unknown predictor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub lambda: Real,
    pub forest: ForestConfig,
    pub gbm: GbmConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            lambda: ridge::DEFAULT_LAMBDA,
            forest: ForestConfig::default(),
            gbm: GbmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum PredictorModel {
    Ridge(Ridge<Real>),
    Forest(Forest<Real>),
    Gbm(Gbm<Real>),
}

impl PredictorModel {
    pub fn n_features(&self) -> usize {
        match self {
            PredictorModel::Ridge(m) => m.n_features(),
            PredictorModel::Forest(m) => m.n_features(),
            PredictorModel::Gbm(m) => m.n_features(),
        }
    }

    pub fn predict_row(&self, x: &[Real]) -> Result<Real> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(match self {
            PredictorModel::Ridge(m) => m.predict_row(x),
            PredictorModel::Forest(m) => m.predict_row(x),
            PredictorModel::Gbm(m) => m.predict_row(x),
        })
    }
}

fn design(rows: &[FeatureRow]) -> Result<(Matrix<Real>, Vec<Real>)> {
    let labeled: Vec<&FeatureRow> = rows.iter().filter(|r| r.y.is_some()).collect();
    if labeled.len() < 2 {
        return Err(Error::InsufficientData(format!("{} labeled rows", labeled.len())));
    }
    let x = Matrix::from_rows(&labeled.iter().map(|r| r.x.as_slice()).collect::<Vec<_>>())?;
    let y = labeled.iter().map(|r| r.y.expect("filtered")).collect();
    Ok((x, y))
}

/// Fits the chosen regressor on the labeled rows.
pub fn train(rows: &[FeatureRow], kind: PredictorKind, config: &PredictorConfig) -> Result<PredictorModel> {
    let (x, y) = design(rows)?;
    Ok(match kind {
        PredictorKind::Ridge => PredictorModel::Ridge(Ridge::fit(&x, &y, config.lambda)?),
        PredictorKind::Forest => PredictorModel::Forest(Forest::fit(&x, &y, &config.forest)?),
        PredictorKind::Gbm => PredictorModel::Gbm(Gbm::fit(&x, &y, &config.gbm)?),
    })
}

/// Predicted scores over a full models × datasets grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub model_ids: Vec<String>,
    pub dataset_ids: Vec<String>,
    /// `scores[i][j]` for model `i`, dataset `j`.
    pub scores: Vec<Vec<Real>>,
}

impl ScoreMatrix {
    pub fn get(&self, model: &str, dataset: &str) -> Option<Real> {
        let i = self.model_ids.iter().position(|m| m == model)?;
        let j = self.dataset_ids.iter().position(|d| d == dataset)?;
        Some(self.scores[i][j])
    }

    pub fn column(&self, dataset: &str) -> Option<Vec<Real>> {
        let j = self.dataset_ids.iter().position(|d| d == dataset)?;
        Some(self.scores.iter().map(|r| r[j]).collect())
    }

    /// Models for `dataset` by descending score, ties by model id.
    pub fn ranked(&self, dataset: &str) -> Option<Vec<(&str, Real)>> {
        let col = self.column(dataset)?;
        let mut r: Vec<(&str, Real)> = self.model_ids.iter().map(String::as_str).zip(col).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Some(r)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["model_id", "dataset_id", "score"])?;
        for (i, m) in self.model_ids.iter().enumerate() {
            for (j, d) in self.dataset_ids.iter().enumerate() {
                out.row(&[m.clone(), d.clone(), fmt_real(self.scores[i][j])])?;
            }
        }
        out.finish()
    }
}

/// Scores `rows`, which must cover a full models × datasets grid (models and
/// datasets in first-appearance order).
pub fn predict(model: &PredictorModel, rows: &[FeatureRow]) -> Result<ScoreMatrix> {
    let mut model_ids: Vec<String> = Vec::new();
    let mut dataset_ids: Vec<String> = Vec::new();
    for r in rows {
        if !model_ids.contains(&r.model_id) {
            model_ids.push(r.model_id.clone());
        }
        if !dataset_ids.contains(&r.dataset_id) {
            dataset_ids.push(r.dataset_id.clone());
        }
    }
    let mut cells: Vec<Vec<Option<Real>>> = vec![vec![None; dataset_ids.len()]; model_ids.len()];
    for r in rows {
        let i = model_ids.iter().position(|m| *m == r.model_id).expect("collected");
        let j = dataset_ids.iter().position(|d| *d == r.dataset_id).expect("collected");
        let s = model.predict_row(&r.x)?;
        if !s.is_finite() {
            return Err(Error::Numerical(format!("non-finite score for {}/{}", r.model_id, r.dataset_id)));
        }
        cells[i][j] = Some(s);
    }
    let scores = cells
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, c)| c.ok_or_else(|| Error::Shape(format!("no row for {}/{}", model_ids[i], dataset_ids[j]))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix {
        model_ids,
        dataset_ids,
        scores,
    })
}

/// A fitted regressor together with the column layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPredictor {
    pub encoder: FeatureEncoder,
    pub model: PredictorModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::fixtures::{dataset, ft, model};
    use crate::transferability::{TransferMethod, TransferRecord};

    fn zoo() -> Zoo {
        let mut m3 = model("m3", "vit");
        m3.pretrained_dataset_id = Some("d2".into());
        m3.pretrained_accuracy = None;
        m3.num_params = 999;
        Zoo::new(
            vec![model("m1", "resnet"), model("m2", "vit"), m3],
            vec![dataset("d1"), dataset("d2")],
            vec![ft("m1", "d1", 0.8), ft("m2", "d1", 0.6), ft("m3", "d2", 0.7)],
            vec![],
            vec![
                TransferRecord {
                    model_id: "m1".into(),
                    dataset_id: "d1".into(),
                    method: TransferMethod::Logme,
                    score: 2.0,
                },
                TransferRecord {
                    model_id: "m2".into(),
                    dataset_id: "d1".into(),
                    method: TransferMethod::Logme,
                    score: 1.0,
                },
            ],
        )
        .unwrap()
    }

    fn phi() -> SimilarityMatrix {
        SimilarityMatrix::from_parts(vec!["d1".into(), "d2".into()], vec![vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap()
    }

    fn table(dim: usize) -> EmbeddingTable {
        let mut v = BTreeMap::new();
        for (k, n) in [NodeRef::model("m1"), NodeRef::model("m2"), NodeRef::model("m3"), NodeRef::dataset("d1"), NodeRef::dataset("d2")]
            .into_iter()
            .enumerate()
        {
            v.insert(n, (0..dim).map(|j| (k * 10 + j) as f64).collect());
        }
        EmbeddingTable::new(v).unwrap()
    }

    #[test]
    fn graph_only_row_is_two_embeddings() {
        let z = zoo();
        let enc = FeatureEncoder::fit(&z, ["m1", "m2"], FeatureSpec::graph_only(), 128).unwrap();
        let rows = assemble_features(&z, &phi(), Some(&table(128)), &[("m1".into(), "d1".into())], &enc).unwrap();
        assert_eq!(rows[0].x.len(), 256);
        assert_eq!(rows[0].x[0], 0.0);
        assert_eq!(rows[0].x[128], 30.0);
        assert_eq!(rows[0].y, Some(0.8));
    }

    #[test]
    fn hand_assembled_row_matches() {
        let z = zoo();
        let enc = FeatureEncoder::fit(&z, ["m1", "m2", "m3"], FeatureSpec::all(), 2).unwrap();
        let rows = assemble_features(&z, &phi(), Some(&table(2)), &[("m3".into(), "d1".into())], &enc).unwrap();
        let expected = vec![
            3.0,                     // log10(1000)
            10.0,                    // classes
            224.0,                   // input shape
            (1000.0f64).log10(),     // log10(999 + 1)
            98.0,                    // memory
            0.0,                     // missing pretrained accuracy
            0.0,                     // arch=resnet
            1.0,                     // arch=vit
            1.0,                     // pretrained=d2
            0.0,                     // pretrained=imagenet
            0.3,                     // φ(d2, d1)
            0.0,                     // no transfer score
            0.0,                     // presence flag
            20.0,
            21.0,
            30.0,
            31.0,
        ];
        assert_eq!(rows[0].x, expected);
        assert_eq!(rows[0].y, None);
        assert_eq!(enc.column_names().len(), expected.len());
    }

    #[test]
    fn transfer_score_is_normalized_with_flag() {
        let z = zoo();
        let spec = FeatureSpec {
            use_transfer_score: true,
            ..FeatureSpec::metadata_only()
        };
        let enc = FeatureEncoder::fit(&z, ["m1"], spec, 0).unwrap();
        let rows = assemble_features(&z, &phi(), None, &[("m1".into(), "d1".into()), ("m2".into(), "d1".into())], &enc).unwrap();
        let n = rows[0].x.len();
        assert_eq!(&rows[0].x[n - 2..], &[1.0, 1.0]);
        assert_eq!(&rows[1].x[n - 2..], &[0.0, 1.0]);
    }

    #[test]
    fn unseen_architecture_is_zero_block() {
        let z = zoo();
        let enc = FeatureEncoder::fit(&z, ["m1"], FeatureSpec::metadata_only(), 0).unwrap();
        assert_eq!(enc.architectures, vec!["resnet"]);
        let rows = assemble_features(&z, &phi(), None, &[("m2".into(), "d1".into())], &enc).unwrap();
        assert_eq!(rows[0].x[6], 0.0);

        let three = FeatureEncoder::fit(&z, ["m1", "m2", "m3"], FeatureSpec::metadata_only(), 0).unwrap();
        assert_eq!(three.architectures.len(), 2);
    }

    #[test]
    fn missing_embedding_is_reported() {
        let z = zoo();
        let enc = FeatureEncoder::fit(&z, ["m1"], FeatureSpec::graph_only(), 2).unwrap();
        let mut v = BTreeMap::new();
        v.insert(NodeRef::model("m1"), vec![0.0, 0.0]);
        let t = EmbeddingTable::new(v).unwrap();
        let err = assemble_features(&z, &phi(), Some(&t), &[("m1".into(), "d1".into())], &enc).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding(_)));
    }

    #[test]
    fn empty_spec_rejected() {
        let spec = FeatureSpec {
            use_metadata: false,
            ..FeatureSpec::graph_only()
        };
        let spec = FeatureSpec { use_graph: false, ..spec };
        assert!(FeatureEncoder::fit(&zoo(), ["m1"], spec, 0).is_err());
    }

    #[test]
    fn predict_builds_grid_and_checks_width() {
        let x = |a: f64| vec![a, 1.0 - a];
        let row = |m: &str, d: &str, a: f64, y: Option<f64>| FeatureRow {
            model_id: m.into(),
            dataset_id: d.into(),
            x: x(a),
            y,
        };
        let train_rows = vec![row("m1", "d1", 0.1, Some(0.6)), row("m2", "d1", 0.9, Some(0.8)), row("m1", "d2", 0.5, Some(0.7))];
        let model = train(&train_rows, PredictorKind::Ridge, &PredictorConfig::default()).unwrap();
        let grid = vec![row("m1", "d1", 0.1, None), row("m1", "d2", 0.2, None), row("m2", "d1", 0.3, None), row("m2", "d2", 0.4, None)];
        let s = predict(&model, &grid).unwrap();
        assert_eq!((s.model_ids.len(), s.dataset_ids.len()), (2, 2));
        let ragged = &grid[..3];
        assert!(matches!(predict(&model, ragged), Err(Error::Shape(_))));
        let mut wide = grid.clone();
        wide[0].x.push(0.0);
        assert!(matches!(predict(&model, &wide), Err(Error::Shape(_))));
    }

    #[test]
    fn ranked_breaks_ties_by_model_id() {
        let s = ScoreMatrix {
            model_ids: vec!["b".into(), "a".into(), "c".into()],
            dataset_ids: vec!["d".into()],
            scores: vec![vec![0.5], vec![0.5], vec![0.9]],
        };
        let r: Vec<&str> = s.ranked("d").unwrap().into_iter().map(|(m, _)| m).collect();
        assert_eq!(r, vec!["c", "a", "b"]);
    }

    #[test]
    fn model_serializes_round_trip() {
        let rows: Vec<FeatureRow> = (0..10)
            .map(|i| FeatureRow {
                model_id: format!("m{i}"),
                dataset_id: "d".into(),
                x: vec![i as f64, (i * i) as f64],
                y: Some(i as f64 / 10.0),
            })
            .collect();
        for kind in [PredictorKind::Ridge, PredictorKind::Forest, PredictorKind::Gbm] {
            let cfg = PredictorConfig {
                gbm: GbmConfig { trees: 10, ..GbmConfig::default() },
                forest: ForestConfig { trees: 5, ..ForestConfig::default() },
                ..PredictorConfig::default()
            };
            let m = train(&rows, kind, &cfg).unwrap();
            let back: PredictorModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            for r in &rows {
                assert_eq!(m.predict_row(&r.x).unwrap(), back.predict_row(&r.x).unwrap());
            }
        }
    }
}
