//! Zoo ground data: model and dataset cards, training history, per-sample
//! probe features and ingested transferability scores.
//!
//! On-disk layout of a zoo directory:
//!
//! ```text
//! models.csv            model_id,architecture,pretrained_dataset_id,input_shape,num_params,memory_mb,pretrained_accuracy
//! datasets.csv          dataset_id,num_samples,num_classes,modality
//! history.csv           model_id,dataset_id,accuracy,kind
//! features/<id>.csv     optional, one probe-feature row per sample
//! transfer_scores.csv   optional, model_id,dataset_id,method,score
//! ```
//!
//! Optional cells are empty. Reals are written with 17 significant digits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_opt_real, fmt_real, CsvOut, Table};
use crate::linalg::Matrix;
use crate::transferability::{TransferMethod, TransferRecord};
use crate::Real;

pub const MODELS_FILE: &str = "models.csv";
pub const DATASETS_FILE: &str = "datasets.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const FEATURES_DIR: &str = "features";
pub const TRANSFER_FILE: &str = "transfer_scores.csv";

const MODELS_HEADER: [&str; 7] = [
    "model_id",
    "architecture",
    "pretrained_dataset_id",
    "input_shape",
    "num_params",
    "memory_mb",
    "pretrained_accuracy",
];
const DATASETS_HEADER: [&str; 4] = ["dataset_id", "num_samples", "num_classes", "modality"];
const HISTORY_HEADER: [&str; 4] = ["model_id", "dataset_id", "accuracy", "kind"];
pub(crate) const TRANSFER_HEADER: [&str; 4] = ["model_id", "dataset_id", "method", "score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_id: String,
    pub architecture: String,
    pub pretrained_dataset_id: Option<String>,
    /// Pixels per side for images, max tokens for text.
    pub input_shape: u32,
    pub num_params: u64,
    pub memory_mb: Real,
    pub pretrained_accuracy: Option<Real>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCard {
    pub dataset_id: String,
    pub num_samples: u64,
    pub num_classes: u32,
    pub modality: Modality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub accuracy: Real,
    pub kind: RecordKind,
}

/// Probe-network output for one dataset, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatureMatrix {
    pub dataset_id: String,
    pub rows: Matrix<Real>,
}

impl SampleFeatureMatrix {
    pub fn new(dataset_id: impl Into<String>, rows: Matrix<Real>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            rows,
        }
    }
}

macro_rules! str_enum {
    ($ty:ty { $($variant:path => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s { $($s => Ok($variant),)+ other => Err(format!("unknown value {other:?}")) }
            }
        }
    };
}

str_enum!(Modality { Modality::Image => "image", Modality::Text => "text" });
str_enum!(RecordKind { RecordKind::Pretrain => "pretrain", RecordKind::Finetune => "finetune" });

/// A loaded model zoo. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Zoo {
    models: Vec<ModelCard>,
    datasets: Vec<DatasetCard>,
    history: Vec<TrainingRecord>,
    features: BTreeMap<String, SampleFeatureMatrix>,
    transfer_scores: Vec<TransferRecord>,
    model_index: BTreeMap<String, usize>,
    dataset_index: BTreeMap<String, usize>,
}

impl Zoo {
    /// Builds a zoo and rejects it if any invariant is violated.
    pub fn new(
        models: Vec<ModelCard>,
        datasets: Vec<DatasetCard>,
        history: Vec<TrainingRecord>,
        features: Vec<SampleFeatureMatrix>,
        transfer_scores: Vec<TransferRecord>,
    ) -> Result<Self> {
        let zoo = Self::from_parts_unchecked(models, datasets, history, features, transfer_scores);
        let report = validate_zoo(&zoo);
        match report.violations.first() {
            None => Ok(zoo),
            Some(v) => Err(Error::Integrity(format!(
                "{v}{}",
                if report.violations.len() > 1 {
                    format!(" (and {} more)", report.violations.len() - 1)
                } else {
                    String::new()
                }
            ))),
        }
    }

    /// Builds a zoo without validation, for inspecting bad inputs with
    /// [`validate_zoo`].
    pub fn from_parts_unchecked(
        models: Vec<ModelCard>,
        datasets: Vec<DatasetCard>,
        history: Vec<TrainingRecord>,
        features: Vec<SampleFeatureMatrix>,
        transfer_scores: Vec<TransferRecord>,
    ) -> Self {
        let model_index = models
            .iter()
            .enumerate()
            .map(|(i, m)| (m.model_id.clone(), i))
            .collect();
        let dataset_index = datasets
            .iter()
            .enumerate()
            .map(|(i, d)| (d.dataset_id.clone(), i))
            .collect();
        let features = features
            .into_iter()
            .map(|f| (f.dataset_id.clone(), f))
            .collect();
        Self {
            models,
            datasets,
            history,
            features,
            transfer_scores,
            model_index,
            dataset_index,
        }
    }

    pub fn models(&self) -> &[ModelCard] {
        &self.models
    }

    pub fn datasets(&self) -> &[DatasetCard] {
        &self.datasets
    }

    pub fn history(&self) -> &[TrainingRecord] {
        &self.history
    }

    pub fn features(&self) -> &BTreeMap<String, SampleFeatureMatrix> {
        &self.features
    }

    pub fn transfer_scores(&self) -> &[TransferRecord] {
        &self.transfer_scores
    }

    pub fn model(&self, id: &str) -> Option<&ModelCard> {
        self.model_index.get(id).map(|&i| &self.models[i])
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetCard> {
        self.dataset_index.get(id).map(|&i| &self.datasets[i])
    }

    pub fn model_position(&self, id: &str) -> Option<usize> {
        self.model_index.get(id).copied()
    }

    pub fn dataset_position(&self, id: &str) -> Option<usize> {
        self.dataset_index.get(id).copied()
    }

    /// Fine-tune accuracy of `model` on `dataset`, if recorded.
    pub fn finetune_accuracy(&self, model: &str, dataset: &str) -> Option<Real> {
        self.history
            .iter()
            .find(|r| r.kind == RecordKind::Finetune && r.model_id == model && r.dataset_id == dataset)
            .map(|r| r.accuracy)
    }

    /// Copy of this zoo with a different training history.
    pub fn with_history(&self, history: Vec<TrainingRecord>) -> Self {
        Self {
            history,
            ..self.clone()
        }
    }

    /// Copy of this zoo with a different set of transferability scores.
    pub fn with_transfer_scores(&self, transfer_scores: Vec<TransferRecord>) -> Self {
        Self {
            transfer_scores,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending record, rendered for humans.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }
}

fn in_unit(x: Real) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Lists every invariant violation in `zoo`.
pub fn validate_zoo(zoo: &Zoo) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = BTreeSet::new();
    for m in &zoo.models {
        let subject = format!("model {}", m.model_id);
        if !seen.insert(m.model_id.as_str()) {
            report.push(&subject, "duplicate model_id");
        }
        if m.model_id.is_empty() {
            report.push(&subject, "empty model_id");
        }
        if !(m.memory_mb.is_finite() && m.memory_mb >= 0.0) {
            report.push(&subject, "memory_mb must be finite and non-negative");
        }
        if let Some(acc) = m.pretrained_accuracy {
            if !in_unit(acc) {
                report.push(&subject, "pretrained_accuracy out of [0,1]");
            }
        }
    }

    let mut seen = BTreeSet::new();
    for d in &zoo.datasets {
        let subject = format!("dataset {}", d.dataset_id);
        if !seen.insert(d.dataset_id.as_str()) {
            report.push(&subject, "duplicate dataset_id");
        }
        if d.dataset_id.is_empty() {
            report.push(&subject, "empty dataset_id");
        }
        if d.num_classes < 2 {
            report.push(&subject, "num_classes must be at least 2");
        }
        if d.num_samples < u64::from(d.num_classes) {
            report.push(&subject, "num_samples smaller than num_classes");
        }
    }

    let mut seen = BTreeSet::new();
    for r in &zoo.history {
        let subject = format!("history row ({}, {}, {})", r.model_id, r.dataset_id, r.kind);
        if zoo.model(&r.model_id).is_none() {
            report.push(&subject, format!("unknown model {}", r.model_id));
        }
        if zoo.dataset(&r.dataset_id).is_none() {
            report.push(&subject, format!("unknown dataset {}", r.dataset_id));
        }
        if !in_unit(r.accuracy) {
            report.push(&subject, "accuracy out of [0,1]");
        }
        if !seen.insert((r.model_id.as_str(), r.dataset_id.as_str(), r.kind)) {
            report.push(&subject, "duplicate (model, dataset, kind) record");
        }
    }

    for (id, f) in &zoo.features {
        let subject = format!("features {id}");
        if zoo.dataset(id).is_none() {
            report.push(&subject, format!("unknown dataset {id}"));
        }
        if f.rows.nrows() == 0 || f.rows.ncols() == 0 {
            report.push(&subject, "feature matrix must be at least 1x1");
        }
        if !f.rows.is_finite() {
            report.push(&subject, "non-finite feature entry");
        }
    }

    let mut seen = BTreeSet::new();
    for t in &zoo.transfer_scores {
        let subject = format!("transfer score ({}, {}, {})", t.model_id, t.dataset_id, t.method);
        if zoo.model(&t.model_id).is_none() {
            report.push(&subject, format!("unknown model {}", t.model_id));
        }
        if zoo.dataset(&t.dataset_id).is_none() {
            report.push(&subject, format!("unknown dataset {}", t.dataset_id));
        }
        if !t.score.is_finite() {
            report.push(&subject, "non-finite score");
        }
        if !seen.insert((t.model_id.as_str(), t.dataset_id.as_str(), t.method)) {
            report.push(&subject, "duplicate (model, dataset, method) score");
        }
    }

    report
}

/// Loads and validates a zoo directory.
pub fn load_zoo(root: &Path) -> Result<Zoo> {
    let models = read_models(&root.join(MODELS_FILE))?;
    let datasets = read_datasets(&root.join(DATASETS_FILE))?;
    let history = read_history(&root.join(HISTORY_FILE))?;

    let mut features = Vec::new();
    let fdir = root.join(FEATURES_DIR);
    if fdir.is_dir() {
        let mut paths: Vec<_> = fs::read_dir(&fdir)
            .map_err(|source| Error::Io {
                path: fdir.clone(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        for p in paths {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            features.push(SampleFeatureMatrix::new(id, read_real_matrix(&p)?));
        }
    }

    let tpath = root.join(TRANSFER_FILE);
    let transfer = if tpath.is_file() {
        read_transfer_scores(&tpath)?
    } else {
        Vec::new()
    };

    Zoo::new(models, datasets, history, features, transfer)
}

/// Writes `zoo` as a registry directory readable by [`load_zoo`].
pub fn save_zoo(zoo: &Zoo, root: &Path) -> Result<()> {
    let mut out = CsvOut::create(&root.join(MODELS_FILE), &MODELS_HEADER)?;
    for m in &zoo.models {
        out.row(&[
            m.model_id.clone(),
            m.architecture.clone(),
            m.pretrained_dataset_id.clone().unwrap_or_default(),
            m.input_shape.to_string(),
            m.num_params.to_string(),
            fmt_real(m.memory_mb),
            fmt_opt_real(m.pretrained_accuracy),
        ])?;
    }
    out.finish()?;

    let mut out = CsvOut::create(&root.join(DATASETS_FILE), &DATASETS_HEADER)?;
    for d in &zoo.datasets {
        out.row(&[
            d.dataset_id.clone(),
            d.num_samples.to_string(),
            d.num_classes.to_string(),
            d.modality.to_string(),
        ])?;
    }
    out.finish()?;

    let mut out = CsvOut::create(&root.join(HISTORY_FILE), &HISTORY_HEADER)?;
    for r in &zoo.history {
        out.row(&[
            r.model_id.clone(),
            r.dataset_id.clone(),
            fmt_real(r.accuracy),
            r.kind.to_string(),
        ])?;
    }
    out.finish()?;

    for (id, f) in &zoo.features {
        write_real_matrix(&root.join(FEATURES_DIR).join(format!("{id}.csv")), &f.rows)?;
    }

    if !zoo.transfer_scores.is_empty() {
        write_transfer_scores(&root.join(TRANSFER_FILE), &zoo.transfer_scores)?;
    }
    Ok(())
}

fn read_models(path: &Path) -> Result<Vec<ModelCard>> {
    let t = Table::read(path)?;
    t.expect_header(&MODELS_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let pretrained = t.field(line, rec, 2)?;
            Ok(ModelCard {
                model_id: t.field(line, rec, 0)?.to_owned(),
                architecture: t.field(line, rec, 1)?.to_owned(),
                pretrained_dataset_id: (!pretrained.is_empty()).then(|| pretrained.to_owned()),
                input_shape: t.parse(line, rec, 3)?,
                num_params: t.parse(line, rec, 4)?,
                memory_mb: t.parse(line, rec, 5)?,
                pretrained_accuracy: t.parse_opt(line, rec, 6)?,
            })
        })
        .collect()
}

fn read_datasets(path: &Path) -> Result<Vec<DatasetCard>> {
    let t = Table::read(path)?;
    t.expect_header(&DATASETS_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            Ok(DatasetCard {
                dataset_id: t.field(line, rec, 0)?.to_owned(),
                num_samples: t.parse(line, rec, 1)?,
                num_classes: t.parse(line, rec, 2)?,
                modality: t.parse(line, rec, 3)?,
            })
        })
        .collect()
}

fn read_history(path: &Path) -> Result<Vec<TrainingRecord>> {
    let t = Table::read(path)?;
    t.expect_header(&HISTORY_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            Ok(TrainingRecord {
                model_id: t.field(line, rec, 0)?.to_owned(),
                dataset_id: t.field(line, rec, 1)?.to_owned(),
                accuracy: t.parse(line, rec, 2)?,
                kind: t.parse(line, rec, 3)?,
            })
        })
        .collect()
}

pub fn read_transfer_scores(path: &Path) -> Result<Vec<TransferRecord>> {
    let t = Table::read(path)?;
    t.expect_header(&TRANSFER_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            Ok(TransferRecord {
                model_id: t.field(line, rec, 0)?.to_owned(),
                dataset_id: t.field(line, rec, 1)?.to_owned(),
                method: t.parse::<TransferMethod>(line, rec, 2)?,
                score: t.parse(line, rec, 3)?,
            })
        })
        .collect()
}

pub fn write_transfer_scores(path: &Path, records: &[TransferRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, &TRANSFER_HEADER)?;
    for r in records {
        out.row(&[
            r.model_id.clone(),
            r.dataset_id.clone(),
            r.method.to_string(),
            fmt_real(r.score),
        ])?;
    }
    out.finish()
}

/// Reads a headed CSV whose every cell is a real.
pub fn read_real_matrix(path: &Path) -> Result<Matrix<Real>> {
    let t = Table::read(path)?;
    let rows = t.real_rows()?;
    let cols = t.header.len();
    if let Some(((line, _), r)) = t.rows.iter().zip(&rows).find(|(_, r)| r.len() != cols) {
        return Err(t.parse_error(*line, format!("expected {cols} columns, found {}", r.len())));
    }
    Matrix::from_rows(&rows)
}

/// Writes a matrix with an `f0..f{d-1}` header.
pub fn write_real_matrix(path: &Path, m: &Matrix<Real>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("f{j}")).collect();
    let mut out = CsvOut::create(path, &header)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_real(v)).collect();
        out.row(&row)?;
    }
    out.finish()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn model(id: &str, arch: &str) -> ModelCard {
        ModelCard {
            model_id: id.into(),
            architecture: arch.into(),
            pretrained_dataset_id: Some("imagenet".into()),
            input_shape: 224,
            num_params: 25_000_000,
            memory_mb: 98.0,
            pretrained_accuracy: Some(0.76),
        }
    }

    pub fn dataset(id: &str) -> DatasetCard {
        DatasetCard {
            dataset_id: id.into(),
            num_samples: 1000,
            num_classes: 10,
            modality: Modality::Image,
        }
    }

    pub fn ft(m: &str, d: &str, acc: f64) -> TrainingRecord {
        TrainingRecord {
            model_id: m.into(),
            dataset_id: d.into(),
            accuracy: acc,
            kind: RecordKind::Finetune,
        }
    }

    pub fn small_zoo() -> Zoo {
        Zoo::new(
            vec![model("m1", "resnet"), model("m2", "vit")],
            vec![dataset("d1"), dataset("d2")],
            vec![ft("m1", "d1", 0.8), ft("m1", "d2", 0.6), ft("m2", "d1", 0.7), ft("m2", "d2", 0.9)],
            vec![],
            vec![],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn clean_zoo_has_empty_report() {
        assert!(validate_zoo(&small_zoo()).is_clean());
    }

    #[test]
    fn accuracy_out_of_range_is_one_violation() {
        let zoo = Zoo::from_parts_unchecked(
            vec![model("m1", "resnet")],
            vec![dataset("d1")],
            vec![ft("m1", "d1", 1.3)],
            vec![],
            vec![],
        );
        let report = validate_zoo(&zoo);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "accuracy out of [0,1]");
    }

    #[test]
    fn duplicate_finetune_rows_are_one_violation() {
        let zoo = Zoo::from_parts_unchecked(
            vec![model("m1", "resnet")],
            vec![dataset("d1")],
            vec![ft("m1", "d1", 0.3), ft("m1", "d1", 0.4)],
            vec![],
            vec![],
        );
        let report = validate_zoo(&zoo);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("duplicate"));
    }

    #[test]
    fn pretrain_and_finetune_for_same_pair_are_allowed() {
        let mut pre = ft("m1", "d1", 0.9);
        pre.kind = RecordKind::Pretrain;
        let zoo = Zoo::from_parts_unchecked(
            vec![model("m1", "resnet")],
            vec![dataset("d1")],
            vec![ft("m1", "d1", 0.3), pre],
            vec![],
            vec![],
        );
        assert!(validate_zoo(&zoo).is_clean());
    }

    #[test]
    fn dangling_model_is_rejected_by_new() {
        let err = Zoo::new(
            vec![model("m1", "resnet")],
            vec![dataset("d1")],
            vec![ft("m9", "d1", 0.3)],
            vec![],
            vec![],
        )
        .unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains("m9"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dataset_card_invariants() {
        let mut d = dataset("d1");
        d.num_classes = 1;
        d.num_samples = 0;
        let zoo = Zoo::from_parts_unchecked(vec![], vec![d], vec![], vec![], vec![]);
        assert_eq!(validate_zoo(&zoo).violations.len(), 2);
    }

    #[test]
    fn finetune_lookup() {
        let zoo = small_zoo();
        assert_eq!(zoo.finetune_accuracy("m2", "d2"), Some(0.9));
        assert_eq!(zoo.finetune_accuracy("m2", "d3"), None);
    }
}
