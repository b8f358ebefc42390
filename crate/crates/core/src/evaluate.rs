//! Leave-one-out evaluation: Pearson correlation between predicted scores
//! and fine-tuning accuracy, top-k accuracy, and history-ratio ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_graph, Embedder, EmbeddingTable, GnnConfig, WalkConfig};
use crate::error::{Error, Result};
use crate::io::{fmt_opt_real, fmt_real, CsvOut};
use crate::predictor::{
    assemble_features, predict, train, FeatureEncoder, FeatureRow, FeatureSpec, PredictorConfig, PredictorKind,
    ScoreMatrix, TrainedPredictor,
};
use crate::registry::{RecordKind, Zoo};
use crate::scalar::Scalar;
use crate::simfeat::{similarity_matrix, zoo_embeddings, Aggregation, DatasetEmbedding, SimilarityMatrix};
use crate::zoograph::{build_graph, remove_target_edges, GraphConfig, NodeRef, ZooGraph};
use crate::Real;

/// Targets whose accuracy spread falls below this are skipped.
pub const MIN_TARGET_STD: Real = 0.005;
pub const RESULTS_FILE: &str = "results.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Pearson correlation `Σ(t−t̄)(s−s̄) / √(Σ(t−t̄)² Σ(s−s̄)²)`, clamped to
/// `[−1, 1]`.
pub fn pearson<T: Scalar>(s: &[T], t: &[T]) -> Result<T> {
    if s.len() != t.len() {
        return Err(Error::Shape(format!("pearson of lengths {} and {}", s.len(), t.len())));
    }
    if s.len() < 2 {
        return Err(Error::InsufficientData(format!("pearson needs 2 points, got {}", s.len())));
    }
    let n = T::from_usize_lossy(s.len());
    let ms = s.iter().copied().sum::<T>() / n;
    let mt = t.iter().copied().sum::<T>() / n;
    let (mut st, mut ss, mut tt) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in s.iter().zip(t) {
        let (da, db) = (a - ms, b - mt);
        st += da * db;
        ss += da * da;
        tt += db * db;
    }
    if !(ss > T::zero()) || !(tt > T::zero()) {
        return Err(Error::DegenerateVector("pearson of a constant vector".into()));
    }
    let r = st / (ss * tt).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Mean of `t` over the `k` entries with the largest `s`; ties go to the
/// smaller id.
pub fn topk_accuracy<T: Scalar, S: AsRef<str>>(s: &[T], t: &[T], ids: &[S], k: usize) -> Result<T> {
    let n = s.len();
    if t.len() != n || ids.len() != n {
        return Err(Error::Shape("scores, accuracies and ids differ in length".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ids[a].as_ref().cmp(ids[b].as_ref()))
    });
    Ok(order[..k].iter().map(|&i| t[i]).sum::<T>() / T::from_usize_lossy(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Label used in result tables; derived from the settings when absent.
    pub name: Option<String>,
    pub embedder: Embedder,
    pub predictor: PredictorKind,
    pub feature_spec: FeatureSpec,
    pub aggregation: Aggregation,
    pub graph_config: GraphConfig,
    pub walk_config: WalkConfig,
    pub gnn_config: GnnConfig,
    pub predictor_config: PredictorConfig,
    pub topk: Vec<usize>,
    /// Overrides the seeds of every stage.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            name: None,
            embedder: Embedder::Node2vec,
            predictor: PredictorKind::Ridge,
            feature_spec: FeatureSpec::all(),
            aggregation: Aggregation::Sum,
            graph_config: GraphConfig::default(),
            walk_config: WalkConfig::default(),
            gnn_config: GnnConfig::default(),
            predictor_config: PredictorConfig::default(),
            topk: vec![1, 5],
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let f = self.feature_spec;
        let groups: String = [
            (f.use_metadata, 'm'),
            (f.use_similarity, 's'),
            (f.use_transfer_score, 't'),
            (f.use_graph, 'g'),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, c)| c)
        .collect();
        if f.use_graph {
            format!("{}-{}-{groups}", self.embedder, self.predictor)
        } else {
            format!("{}-{groups}", self.predictor)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_spec.validate()?;
        self.graph_config.validate()?;
        self.walk_config.validate()?;
        self.gnn_config.validate()?;
        if self.topk.contains(&0) {
            return Err(Error::InvalidConfig("top-k values must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Walk settings with the pipeline seed applied.
    pub fn walk(&self) -> WalkConfig {
        WalkConfig {
            seed: self.seed,
            ..self.walk_config
        }
    }

    /// GNN settings with the pipeline seed applied.
    pub fn gnn(&self) -> GnnConfig {
        GnnConfig {
            seed: self.seed,
            ..self.gnn_config
        }
    }

    fn predictor_cfg(&self) -> PredictorConfig {
        let mut p = self.predictor_config;
        p.forest.seed = self.seed;
        p.gbm.seed = self.seed;
        p
    }
}

/// A zoo with its dataset embeddings and similarity matrix computed once.
#[derive(Debug, Clone)]
pub struct PreparedZoo {
    pub zoo: Zoo,
    pub dataset_embeddings: Vec<DatasetEmbedding>,
    pub phi: SimilarityMatrix,
}

impl PreparedZoo {
    pub fn new(zoo: Zoo, how: Aggregation) -> Result<Self> {
        let dataset_embeddings = zoo_embeddings(&zoo, how)?;
        let phi = similarity_matrix(&dataset_embeddings)?;
        Ok(Self {
            zoo,
            dataset_embeddings,
            phi,
        })
    }

    pub fn from_parts(zoo: Zoo, dataset_embeddings: Vec<DatasetEmbedding>, phi: SimilarityMatrix) -> Self {
        Self {
            zoo,
            dataset_embeddings,
            phi,
        }
    }

    /// Dataset embeddings keyed by graph node, used as GNN inputs.
    pub fn node_features(&self) -> BTreeMap<NodeRef, Vec<Real>> {
        self.dataset_embeddings
            .iter()
            .filter(|e| self.zoo.dataset(&e.dataset_id).is_some())
            .map(|e| (NodeRef::dataset(&e.dataset_id), e.vector.clone()))
            .collect()
    }
}

/// Everything learned by one pipeline run.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub graph: ZooGraph,
    pub embeddings: Option<EmbeddingTable>,
    pub predictor: TrainedPredictor,
    pub training_rows: Vec<FeatureRow>,
    /// Zoo the predictor was trained on (held-out history removed).
    pub training_zoo: Zoo,
}

impl FittedPipeline {
    /// Predicted scores of every zoo model on `dataset`.
    pub fn score_dataset(&self, prepared: &PreparedZoo, dataset: &str) -> Result<ScoreMatrix> {
        if self.training_zoo.dataset(dataset).is_none() {
            return Err(Error::NotFound(format!("dataset {dataset}")));
        }
        let pairs: Vec<(String, String)> = self
            .training_zoo
            .models()
            .iter()
            .map(|m| (m.model_id.clone(), dataset.to_owned()))
            .collect();
        let rows = assemble_features(
            &self.training_zoo,
            &prepared.phi,
            self.embeddings.as_ref(),
            &pairs,
            &self.predictor.encoder,
        )?;
        predict(&self.predictor.model, &rows)
    }
}

/// Builds the graph, embeds it, and trains the predictor on all fine-tune
/// records outside `holdout`.
pub fn fit_pipeline(prepared: &PreparedZoo, config: &PipelineConfig, holdout: Option<&str>) -> Result<FittedPipeline> {
    config.validate()?;
    let zoo = &prepared.zoo;
    if let Some(t) = holdout {
        if zoo.dataset(t).is_none() {
            return Err(Error::NotFound(format!("dataset {t}")));
        }
    }
    let training_zoo = match holdout {
        Some(t) => zoo.with_history(zoo.history().iter().filter(|r| r.dataset_id != t).cloned().collect()),
        None => zoo.clone(),
    };
    let mut graph = build_graph(zoo, &prepared.phi, &config.graph_config)?;
    if let Some(t) = holdout {
        graph = remove_target_edges(&graph, t)?;
    }
    let graph = graph.with_node_features(prepared.node_features())?;

    let embeddings = if config.feature_spec.use_graph {
        Some(embed_graph(&graph, config.embedder, &config.walk(), &config.gnn())?)
    } else {
        None
    };

    let mut seen = BTreeSet::new();
    let pairs: Vec<(String, String)> = training_zoo
        .history()
        .iter()
        .filter(|r| r.kind == RecordKind::Finetune)
        .filter(|r| seen.insert((r.model_id.clone(), r.dataset_id.clone())))
        .map(|r| (r.model_id.clone(), r.dataset_id.clone()))
        .collect();
    let graph_dim = embeddings.as_ref().map_or(0, EmbeddingTable::dim);
    let encoder = FeatureEncoder::fit(
        &training_zoo,
        pairs.iter().map(|(m, _)| m.as_str()),
        config.feature_spec,
        graph_dim,
    )?;
    let training_rows = assemble_features(&training_zoo, &prepared.phi, embeddings.as_ref(), &pairs, &encoder)?;
    let model = train(&training_rows, config.predictor, &config.predictor_cfg())?;
    Ok(FittedPipeline {
        graph,
        embeddings,
        predictor: TrainedPredictor { encoder, model },
        training_rows,
        training_zoo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub target_dataset_id: String,
    pub tau: Real,
    pub topk_accuracy: BTreeMap<usize, Real>,
    pub n_models: usize,
}

/// Ground-truth accuracies on `target`, in zoo model order.
fn ground_truth(zoo: &Zoo, target: &str) -> Result<Vec<(String, Real)>> {
    let truth: Vec<(String, Real)> = zoo
        .models()
        .iter()
        .filter_map(|m| zoo.finetune_accuracy(&m.model_id, target).map(|a| (m.model_id.clone(), a)))
        .collect();
    if truth.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "target {target} has {} fine-tune records",
            truth.len()
        )));
    }
    let n = truth.len() as Real;
    let mean = truth.iter().map(|(_, a)| a).sum::<Real>() / n;
    let std = (truth.iter().map(|(_, a)| (a - mean).powi(2)).sum::<Real>() / n).sqrt();
    if std < MIN_TARGET_STD {
        return Err(Error::LowVariance {
            dataset: target.to_owned(),
            std,
            threshold: MIN_TARGET_STD,
        });
    }
    Ok(truth)
}

/// One LOO fold, also returning the fitted pipeline for inspection.
pub fn loo_evaluate_traced(prepared: &PreparedZoo, config: &PipelineConfig, target: &str) -> Result<(LooResult, FittedPipeline)> {
    let truth = ground_truth(&prepared.zoo, target)?;
    let fitted = fit_pipeline(prepared, config, Some(target))?;
    let scores = fitted.score_dataset(prepared, target)?;
    let s: Vec<Real> = truth
        .iter()
        .map(|(m, _)| scores.get(m, target).expect("every model scored"))
        .collect();
    let t: Vec<Real> = truth.iter().map(|(_, a)| *a).collect();
    let ids: Vec<&str> = truth.iter().map(|(m, _)| m.as_str()).collect();
    let tau = pearson(&s, &t)?;
    let mut topk = BTreeMap::new();
    for &k in &config.topk {
        if k <= ids.len() {
            topk.insert(k, topk_accuracy(&s, &t, &ids, k)?);
        }
    }
    Ok((
        LooResult {
            target_dataset_id: target.to_owned(),
            tau,
            topk_accuracy: topk,
            n_models: ids.len(),
        },
        fitted,
    ))
}

pub fn loo_evaluate(prepared: &PreparedZoo, config: &PipelineConfig, target: &str) -> Result<LooResult> {
    loo_evaluate_traced(prepared, config, target).map(|(r, _)| r)
}

/// Outcome of one `(config, target)` fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub config_id: String,
    pub target_dataset_id: String,
    pub result: Option<LooResult>,
    /// Why the fold produced no result.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub config_id: String,
    pub mean_tau: Option<Real>,
    pub n_targets: usize,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub configs: Vec<PipelineConfig>,
    pub summary: Vec<StrategySummary>,
    pub folds: Vec<FoldOutcome>,
}

/// LOO over every zoo dataset for every config. Folds run in parallel;
/// failures are recorded per fold.
pub fn compare_strategies(prepared: &PreparedZoo, configs: &[PipelineConfig]) -> StrategyReport {
    let targets: Vec<&str> = prepared.zoo.datasets().iter().map(|d| d.dataset_id.as_str()).collect();
    let jobs: Vec<(&PipelineConfig, &str)> = configs.iter().flat_map(|c| targets.iter().map(move |t| (c, *t))).collect();
    let folds: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|(c, t)| {
            let (result, note) = match loo_evaluate(prepared, c, t) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            FoldOutcome {
                config_id: c.id(),
                target_dataset_id: (*t).to_owned(),
                result,
                note,
            }
        })
        .collect();
    for f in &folds {
        if let Some(n) = &f.note {
            warn!("{} / {}: {n}", f.config_id, f.target_dataset_id);
        }
    }
    let summary = configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mine = &folds[i * targets.len()..(i + 1) * targets.len()];
            let taus: Vec<Real> = mine.iter().filter_map(|f| f.result.as_ref().map(|r| r.tau)).collect();
            StrategySummary {
                config_id: c.id(),
                mean_tau: (!taus.is_empty()).then(|| taus.iter().sum::<Real>() / taus.len() as Real),
                n_targets: taus.len(),
                n_skipped: mine.len() - taus.len(),
            }
        })
        .collect();
    StrategyReport {
        configs: configs.to_vec(),
        summary,
        folds,
    }
}

/// Mean τ over the folds that produced a result.
pub fn mean_tau(results: &[LooResult]) -> Option<Real> {
    (!results.is_empty()).then(|| results.iter().map(|r| r.tau).sum::<Real>() / results.len() as Real)
}

/// `results.csv`: one row per successful fold.
pub fn write_results_csv(path: &Path, folds: &[FoldOutcome]) -> Result<()> {
    let mut out = CsvOut::create(path, &["config_id", "target_dataset", "tau", "top1", "top5"])?;
    for f in folds {
        if let Some(r) = &f.result {
            out.row(&[
                f.config_id.clone(),
                r.target_dataset_id.clone(),
                fmt_real(r.tau),
                fmt_opt_real(r.topk_accuracy.get(&1).copied()),
                fmt_opt_real(r.topk_accuracy.get(&5).copied()),
            ])?;
        }
    }
    out.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioOutcome {
    pub ratio: Real,
    /// Training records kept (target records excluded).
    pub n_records: usize,
    pub result: Option<LooResult>,
    pub note: Option<String>,
}

/// Re-runs the `target` fold on random subsets of the non-target history.
/// A ratio whose subset leaves some dataset without records is skipped.
pub fn ratio_ablation(prepared: &PreparedZoo, config: &PipelineConfig, target: &str, ratios: &[Real]) -> Result<Vec<RatioOutcome>> {
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::InvalidConfig(format!("ratio {r} outside (0,1]")));
    }
    let zoo = &prepared.zoo;
    if zoo.dataset(target).is_none() {
        return Err(Error::NotFound(format!("dataset {target}")));
    }
    let history = zoo.history();
    let others: Vec<usize> = (0..history.len()).filter(|&i| history[i].dataset_id != target).collect();
    let covered: BTreeSet<&str> = others.iter().map(|&i| history[i].dataset_id.as_str()).collect();
    ratios
        .iter()
        .map(|&ratio| {
            let keep = subsample_count(others.len(), ratio);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let picked: BTreeSet<usize> = sample(&mut rng, others.len(), keep).into_iter().map(|k| others[k]).collect();
            let present: BTreeSet<&str> = picked.iter().map(|&i| history[i].dataset_id.as_str()).collect();
            if let Some(missing) = covered.iter().find(|d| !present.contains(*d)) {
                let note = format!("ratio {ratio}: dataset {missing} left without records");
                warn!("{note}");
                return Ok(RatioOutcome {
                    ratio,
                    n_records: keep,
                    result: None,
                    note: Some(note),
                });
            }
            // Original order is kept so that ratio 1 reproduces the plain fold.
            let history: Vec<_> = (0..history.len())
                .filter(|i| picked.contains(i) || history[*i].dataset_id == target)
                .map(|i| history[i].clone())
                .collect();
            let sub = PreparedZoo::from_parts(zoo.with_history(history), prepared.dataset_embeddings.clone(), prepared.phi.clone());
            let result = loo_evaluate(&sub, config, target)?;
            Ok(RatioOutcome {
                ratio,
                n_records: keep,
                result: Some(result),
                note: None,
            })
        })
        .collect()
}

/// `⌊ratio · n⌋`, exact for ratios representable as decimals.
pub fn subsample_count(n: usize, ratio: Real) -> usize {
    let raw = ratio * n as Real;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.floor() };
    (k as usize).min(n)
}

/// `ablation.csv`: one row per (target, ratio).
pub fn write_ablation_csv(path: &Path, runs: &[(String, Vec<RatioOutcome>)]) -> Result<()> {
    let mut out = CsvOut::create(path, &["target_dataset", "ratio", "n_records", "tau", "top1", "top5", "note"])?;
    for (target, outcomes) in runs {
        for o in outcomes {
            let r = o.result.as_ref();
            out.row(&[
                target.clone(),
                fmt_real(o.ratio),
                o.n_records.to_string(),
                fmt_opt_real(r.map(|r| r.tau)),
                fmt_opt_real(r.and_then(|r| r.topk_accuracy.get(&1).copied())),
                fmt_opt_real(r.and_then(|r| r.topk_accuracy.get(&5).copied())),
                o.note.clone().unwrap_or_default(),
            ])?;
        }
    }
    out.finish()
}
