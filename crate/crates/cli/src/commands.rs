//! One function per subcommand. Each reads the zoo and writes its artifacts
//! under the output directory; stdout carries a short summary.

use std::io::Write;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use zgs::embed::{embed_graph, EmbeddingTable, NODE_EMBEDDINGS_FILE};
use zgs::evaluate::{
    compare_strategies, fit_pipeline, ratio_ablation, subsample_count, write_ablation_csv, write_results_csv, PreparedZoo,
    RatioOutcome, StrategyReport, ABLATION_FILE, REPORT_FILE, RESULTS_FILE,
};
use zgs::io::{read_json, write_json};
use zgs::predictor::{
    assemble_features, predict, write_feature_rows, TrainedPredictor, FEATURES_FILE, PREDICTOR_FILE, SCORES_FILE,
};
use zgs::registry::{load_zoo, write_transfer_scores, Zoo, TRANSFER_FILE};
use zgs::simfeat::{similarity_matrix, write_embedding, zoo_embeddings, EMBEDDINGS_DIR, SIMILARITY_FILE};
use zgs::synthzoo::{generate, write_synth};
use zgs::transferability::{discover_jobs, merge_scores, run_jobs, LOGME_DIR};
use zgs::zoograph::{build_graph, EdgeKind, ZooGraph, GRAPH_FILE};
use zgs::{Error, Real, Result};

use crate::config::RunConfig;

fn prepared(cfg: &RunConfig) -> Result<PreparedZoo> {
    let zoo = load_zoo(cfg.zoo_dir()?)?;
    PreparedZoo::new(zoo, cfg.pipeline.aggregation)
}

fn graph_with_features(cfg: &RunConfig, p: &PreparedZoo) -> Result<ZooGraph> {
    build_graph(&p.zoo, &p.phi, &cfg.pipeline.graph_config)?.with_node_features(p.node_features())
}

fn emit(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

pub fn similarity(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let zoo = load_zoo(cfg.zoo_dir()?)?;
    let dir = cfg.out_dir()?;
    let embeddings = zoo_embeddings(&zoo, cfg.pipeline.aggregation)?;
    let phi = similarity_matrix(&embeddings)?;
    for e in &embeddings {
        write_embedding(&dir.join(EMBEDDINGS_DIR), e)?;
    }
    phi.write_csv(&dir.join(SIMILARITY_FILE))?;
    emit(out, format!("datasets,{}", embeddings.len()))
}

pub fn logme(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let root = cfg.zoo_dir()?;
    let zoo = load_zoo(root)?;
    let jobs = discover_jobs(&root.join(LOGME_DIR))?;
    if let Some(j) = jobs.iter().find(|j| zoo.model(&j.model_id).is_none()) {
        return Err(Error::Integrity(format!("{LOGME_DIR}/{}: unknown model", j.model_id)));
    }
    info!("scoring {} model-dataset pairs", jobs.len());
    let fresh = run_jobs(&jobs, |d| zoo.dataset(d).map(|c| c.num_classes as usize))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_scores(zoo.transfer_scores(), &fresh);
    write_transfer_scores(&cfg.out_dir()?.join(TRANSFER_FILE), &merged)?;
    emit(out, format!("scored,{}", fresh.len()))
}

pub fn graph(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let g = build_graph(&p.zoo, &p.phi, &cfg.pipeline.graph_config)?;
    g.write_csv(&cfg.out_dir()?.join(GRAPH_FILE))?;
    emit(out, "edge_kind,count")?;
    for k in [EdgeKind::DdSimilarity, EdgeKind::MdPerformance, EdgeKind::MdTransfer] {
        emit(out, format!("{k},{}", g.count(k)))?;
    }
    Ok(())
}

pub fn embed(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let g = graph_with_features(cfg, &p)?;
    let pc = &cfg.pipeline;
    let table = embed_graph(&g, pc.embedder, &pc.walk(), &pc.gnn())?;
    table.write_csv(&cfg.out_dir()?.join(NODE_EMBEDDINGS_FILE))?;
    emit(out, format!("{},{},{}", pc.embedder, table.len(), table.dim()))
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let fitted = fit_pipeline(&p, &cfg.pipeline, None)?;
    let dir = cfg.out_dir()?;
    write_json(&dir.join(PREDICTOR_FILE), &fitted.predictor)?;
    write_feature_rows(&dir.join(FEATURES_FILE), &fitted.predictor.encoder, &fitted.training_rows)?;
    if let Some(t) = &fitted.embeddings {
        t.write_csv(&dir.join(NODE_EMBEDDINGS_FILE))?;
    }
    emit(
        out,
        format!("{},{} rows,{} features", cfg.pipeline.id(), fitted.training_rows.len(), fitted.predictor.encoder.width()),
    )
}

pub fn predict_target(cfg: &RunConfig, target: &str, k: usize, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let dir = cfg.out_dir()?;
    if p.zoo.dataset(target).is_none() {
        return Err(Error::NotFound(format!("dataset {target}")));
    }
    let n = p.zoo.models().len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let trained: TrainedPredictor = read_json(&dir.join(PREDICTOR_FILE))?;
    let embeddings = if trained.encoder.graph_dim > 0 {
        Some(EmbeddingTable::read_csv(&dir.join(NODE_EMBEDDINGS_FILE))?)
    } else {
        None
    };
    let pairs: Vec<(String, String)> = p
        .zoo
        .models()
        .iter()
        .map(|m| (m.model_id.clone(), target.to_owned()))
        .collect();
    let rows = assemble_features(&p.zoo, &p.phi, embeddings.as_ref(), &pairs, &trained.encoder)?;
    let scores = predict(&trained.model, &rows)?;
    scores.write_csv(&dir.join(SCORES_FILE))?;
    emit(out, "model_id,score")?;
    for (m, s) in scores.ranked(target).expect("target scored").into_iter().take(k) {
        emit(out, format!("{m},{s}"))?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Report<'a> {
    run_config: &'a RunConfig,
    #[serde(flatten)]
    report: &'a StrategyReport,
}

pub fn evaluate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let report = compare_strategies(&p, &cfg.all_pipelines());
    let dir = cfg.out_dir()?;
    write_results_csv(&dir.join(RESULTS_FILE), &report.folds)?;
    write_json(
        &dir.join(REPORT_FILE),
        &Report {
            run_config: cfg,
            report: &report,
        },
    )?;
    emit(out, "config_id,mean_tau,n_targets,n_skipped")?;
    for s in &report.summary {
        let tau = s.mean_tau.map(|t| format!("{t:.4}")).unwrap_or_default();
        emit(out, format!("{},{tau},{},{}", s.config_id, s.n_targets, s.n_skipped))?;
    }
    Ok(())
}

/// Runs the ratio ablation for `target`, or for every dataset. With every
/// dataset, a target whose fold fails gets a note on each ratio instead.
pub fn ablate(cfg: &RunConfig, target: Option<&str>, out: &mut dyn Write) -> Result<()> {
    let p = prepared(cfg)?;
    let runs: Vec<(String, Vec<RatioOutcome>)> = match target {
        Some(t) => vec![(t.to_owned(), ratio_ablation(&p, &cfg.pipeline, t, &cfg.ratios)?)],
        None => p
            .zoo
            .datasets()
            .par_iter()
            .map(|d| {
                let t = d.dataset_id.as_str();
                let outcomes = ratio_ablation(&p, &cfg.pipeline, t, &cfg.ratios)
                    .unwrap_or_else(|e| failed_outcomes(&p.zoo, t, &cfg.ratios, &e));
                (t.to_owned(), outcomes)
            })
            .collect(),
    };
    write_ablation_csv(&cfg.out_dir()?.join(ABLATION_FILE), &runs)?;
    emit(out, "ratio,mean_tau,n_targets")?;
    for (i, r) in cfg.ratios.iter().enumerate() {
        let taus: Vec<Real> = runs.iter().filter_map(|(_, o)| o[i].result.as_ref().map(|x| x.tau)).collect();
        let mean = if taus.is_empty() {
            String::new()
        } else {
            format!("{:.4}", taus.iter().sum::<Real>() / taus.len() as Real)
        };
        emit(out, format!("{r},{mean},{}", taus.len()))?;
    }
    Ok(())
}

fn failed_outcomes(zoo: &Zoo, target: &str, ratios: &[Real], e: &Error) -> Vec<RatioOutcome> {
    let n = zoo.history().iter().filter(|r| r.dataset_id != target).count();
    ratios
        .iter()
        .map(|&ratio| RatioOutcome {
            ratio,
            n_records: subsample_count(n, ratio),
            result: None,
            note: Some(e.to_string()),
        })
        .collect()
}

pub fn synth(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let (zoo, truth) = generate(&cfg.synth)?;
    write_synth(dir, &zoo, &truth)?;
    emit(
        out,
        format!(
            "models,{}\ndatasets,{}\nrecords,{}",
            zoo.models().len(),
            zoo.datasets().len(),
            zoo.history().len()
        ),
    )
}
