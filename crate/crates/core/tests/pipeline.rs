use zgs::embed::{Embedder, GnnConfig, WalkConfig};
use zgs::evaluate::{
    compare_strategies, fit_pipeline, loo_evaluate, loo_evaluate_traced, ratio_ablation, PipelineConfig, PreparedZoo,
};
use zgs::predictor::PredictorKind;
use zgs::registry::{load_zoo, Zoo};
use zgs::simfeat::Aggregation;
use zgs::synthzoo::{generate, write_synth, SynthConfig};
use zgs::zoograph::EdgeKind;

fn small_zoo(seed: u64) -> Zoo {
    let cfg = SynthConfig {
        n_models: 12,
        n_datasets: 5,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().0
}

fn fast(embedder: Embedder, predictor: PredictorKind) -> PipelineConfig {
    PipelineConfig {
        embedder,
        predictor,
        walk_config: WalkConfig {
            dim: 16,
            walk_length: 10,
            walks_per_node: 4,
            epochs: 2,
            ..WalkConfig::default()
        },
        gnn_config: GnnConfig {
            hidden_dim: 8,
            epochs: 20,
            ..GnnConfig::default()
        },
        ..PipelineConfig::default()
    }
}

#[test]
fn folds_never_see_the_target() {
    let p = PreparedZoo::new(small_zoo(1), Aggregation::Sum).unwrap();
    let cfg = fast(Embedder::Node2vec, PredictorKind::Ridge);
    for d in p.zoo.datasets() {
        let t = &d.dataset_id;
        let (res, fitted) = loo_evaluate_traced(&p, &cfg, t).unwrap();
        assert_eq!(&res.target_dataset_id, t);
        assert!(fitted.training_rows.iter().all(|r| &r.dataset_id != t));
        assert!(fitted.training_zoo.history().iter().all(|r| &r.dataset_id != t));
        assert!(fitted
            .graph
            .edges()
            .iter()
            .filter(|e| e.kind != EdgeKind::DdSimilarity)
            .all(|e| &e.a.id != t && &e.b.id != t));
    }
}

#[test]
fn full_ratio_reproduces_the_plain_fold() {
    let p = PreparedZoo::new(small_zoo(2), Aggregation::Sum).unwrap();
    let cfg = fast(Embedder::Node2vecPlus, PredictorKind::Ridge);
    let plain = loo_evaluate(&p, &cfg, "d2").unwrap();
    let ablated = ratio_ablation(&p, &cfg, "d2", &[1.0]).unwrap();
    assert_eq!(ablated[0].result.as_ref(), Some(&plain));
}

#[test]
fn identical_configs_give_identical_summaries() {
    let p = PreparedZoo::new(small_zoo(3), Aggregation::Sum).unwrap();
    let a = fast(Embedder::Node2vec, PredictorKind::Ridge);
    let b = PipelineConfig {
        name: Some("copy".into()),
        ..a.clone()
    };
    let report = compare_strategies(&p, &[a, b]);
    assert_eq!(report.summary.len(), 2);
    assert_eq!(report.summary[0].mean_tau, report.summary[1].mean_tau);
    assert_eq!(report.summary[0].n_targets, report.summary[1].n_targets);
}

#[test]
fn every_embedder_and_predictor_runs() {
    let p = PreparedZoo::new(small_zoo(4), Aggregation::Mean).unwrap();
    for (e, k) in [
        (Embedder::Graphsage, PredictorKind::Forest),
        (Embedder::Gat, PredictorKind::Gbm),
        (Embedder::Node2vec, PredictorKind::Gbm),
        (Embedder::Node2vecPlus, PredictorKind::Forest),
    ] {
        let res = loo_evaluate(&p, &fast(e, k), "d0").unwrap();
        assert!(res.tau.is_finite() && res.tau.abs() <= 1.0, "{e}/{k}: {}", res.tau);
        let observed = p.zoo.models().iter().filter(|m| p.zoo.finetune_accuracy(&m.model_id, "d0").is_some()).count();
        assert_eq!(res.n_models, observed);
    }
}

#[test]
fn refits_are_deterministic() {
    let p = PreparedZoo::new(small_zoo(5), Aggregation::Sum).unwrap();
    for e in Embedder::ALL {
        let cfg = fast(e, PredictorKind::Ridge);
        let a = fit_pipeline(&p, &cfg, None).unwrap();
        let b = fit_pipeline(&p, &cfg, None).unwrap();
        assert_eq!(a.embeddings, b.embeddings, "{e}");
        assert_eq!(a.predictor, b.predictor, "{e}");
    }
}

#[test]
fn written_zoo_loads_back_equal() {
    let cfg = SynthConfig {
        n_models: 6,
        n_datasets: 3,
        ..SynthConfig::default()
    };
    let (zoo, truth) = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &zoo, &truth).unwrap();
    let back = load_zoo(dir.path()).unwrap();
    assert_eq!(back.models(), zoo.models());
    assert_eq!(back.datasets(), zoo.datasets());
    assert_eq!(back.history(), zoo.history());
    assert_eq!(back.transfer_scores(), zoo.transfer_scores());
}
