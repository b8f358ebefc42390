use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "synth": {"n_models": 12, "n_datasets": 4},
  "pipeline": {"walk_config": {"dim": 16, "walk_length": 10, "walks_per_node": 4, "epochs": 2}}
}"#;

fn zgs(args: &[&str]) -> Output {
    zgs_env(args, &[])
}

fn zgs_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_zgs"));
    c.args(args).env_remove("ZGS_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the small config and a synthetic zoo under `dir`.
fn small_zoo(dir: &Path) -> (String, String) {
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();
    let zoo = dir.join("zoo");
    ok(&zgs(&["synth", "--config", p(&cfg), "--seed", "3", "--out", p(&zoo)]));
    (p(&cfg).to_owned(), p(&zoo).to_owned())
}

#[test]
fn synth_then_evaluate_gives_one_row_per_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let zoo = dir.path().join("zoo");
    ok(&zgs(&["synth", "--seed", "42", "--out", p(&zoo)]));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{}").unwrap();
    let out = ok(&zgs(&["evaluate", "--zoo", p(&zoo), "--config", p(&cfg)]));
    assert!(out.starts_with("config_id,mean_tau,n_targets,n_skipped\n"));
    let results = fs::read_to_string(zoo.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 12);
    assert!(results.starts_with("config_id,target_dataset,tau,top1,top5\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(zoo.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["run_config"]["pipeline"]["walk_config"]["walk_length"], 40);
    assert_eq!(report["run_config"]["pipeline"]["graph_config"]["transfer_prune_threshold"], 0.5);
    assert_eq!(report["summary"].as_array().unwrap().len(), 1);
}

#[test]
fn stage_by_stage_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    let art = dir.path().join("art");
    let common = ["--zoo", &zoo, "--config", &cfg, "--out", p(&art)];
    let run = |cmd: &str, extra: &[&str]| {
        let mut a = vec![cmd];
        a.extend(common);
        a.extend(extra);
        ok(&zgs(&a))
    };

    run("similarity", &[]);
    assert_eq!(fs::read_dir(art.join("embeddings")).unwrap().count(), 4);
    let sim = fs::read_to_string(art.join("similarity.csv")).unwrap();
    assert_eq!(sim.lines().count(), 1 + 16);

    let g = run("graph", &[]);
    assert!(g.contains("dd_similarity,12"));
    assert!(fs::read_to_string(art.join("graph.csv")).unwrap().starts_with("a_kind,a_id,b_kind,b_id,edge_kind,weight,label\n"));

    let e = run("embed", &[]);
    assert!(e.starts_with("node2vec,16,16"), "{e}");

    run("train", &[]);
    for f in ["predictor.json", "features.csv", "embeddings_nodes.csv"] {
        assert!(art.join(f).is_file(), "{f}");
    }

    let top3 = run("predict", &["--target", "d1", "--top-k", "3"]);
    let lines: Vec<&str> = top3.lines().collect();
    assert_eq!(lines[0], "model_id,score");
    assert_eq!(lines.len(), 4);
    let scores: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let top1 = run("predict", &["--target", "d1", "--top-k", "1"]);
    assert_eq!(top1.lines().count(), 2);
    assert_eq!(top1.lines().nth(1), lines.get(1).copied());
    assert_eq!(fs::read_to_string(art.join("scores.csv")).unwrap().lines().count(), 1 + 12);
}

#[test]
fn ablate_writes_a_row_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    let out = ok(&zgs(&["ablate", "--zoo", &zoo, "--config", &cfg, "--target", "d0", "--ratio", "0.5,1.0"]));
    assert!(out.starts_with("ratio,mean_tau,n_targets\n"));
    let csv = fs::read_to_string(Path::new(&zoo).join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().all(|l| l.starts_with("target_dataset") || l.starts_with("d0,")));
}

#[test]
fn logme_scores_probe_files() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    let probe = Path::new(&zoo).join("logme/m00");
    fs::create_dir_all(&probe).unwrap();
    let classes: usize = fs::read_to_string(Path::new(&zoo).join("datasets.csv"))
        .unwrap()
        .lines()
        .find(|l| l.starts_with("d2,"))
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    let mut text = String::from("label,f0,f1\n");
    for i in 0..40 {
        let y = i % classes;
        text.push_str(&format!("{y},{},{}\n", y as f64 + 0.1 * ((i * 7) % 5) as f64, (i % 3) as f64));
    }
    fs::write(probe.join("d2.csv"), text).unwrap();
    let out_dir = dir.path().join("scores");
    let out = ok(&zgs(&["logme", "--zoo", &zoo, "--config", &cfg, "--out", p(&out_dir)]));
    assert_eq!(out.trim(), "scored,1");
    let scores = fs::read_to_string(out_dir.join("transfer_scores.csv")).unwrap();
    let before = fs::read_to_string(Path::new(&zoo).join("transfer_scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), before.lines().count());
    let row = |s: &str| s.lines().find(|l| l.starts_with("m00,d2,")).unwrap().to_owned();
    assert_ne!(row(&scores), row(&before));
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    let mut outputs = Vec::new();
    for threads in ["0", "3"] {
        let art = dir.path().join(format!("t{threads}"));
        ok(&zgs_env(
            &["train", "--zoo", &zoo, "--config", &cfg, "--out", p(&art)],
            &[("ZGS_THREADS", threads)],
        ));
        outputs.push(
            ["predictor.json", "embeddings_nodes.csv", "features.csv"].map(|f| fs::read(art.join(f)).unwrap()),
        );
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn missing_registry_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = zgs(&["train", "--zoo", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("models.csv"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(zgs(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(zgs(&["predict", "--zoo", "z"]).status.code(), Some(1));
    assert_eq!(zgs(&["graph"]).status.code(), Some(1));
    assert_eq!(zgs_env(&["graph", "--zoo", "z"], &[("ZGS_THREADS", "many")]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"pipeline": {"embeder": "gat"}}"#).unwrap();
    let o = zgs(&["graph", "--zoo", "z", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("embeder"));
}

#[test]
fn top_k_beyond_zoo_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    ok(&zgs(&["train", "--zoo", &zoo, "--config", &cfg]));
    let o = zgs(&["predict", "--zoo", &zoo, "--config", &cfg, "--target", "d0", "--top-k", "13"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn constant_dataset_features_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, zoo) = small_zoo(dir.path());
    let f = Path::new(&zoo).join("features/d1.csv");
    let text = fs::read_to_string(&f).unwrap();
    let header = text.lines().next().unwrap();
    let row = vec!["1.0"; header.split(',').count()].join(",");
    let rows: Vec<&str> = std::iter::once(header).chain(text.lines().skip(1).map(|_| row.as_str())).collect();
    fs::write(&f, rows.join("\n") + "\n").unwrap();
    let o = zgs(&["similarity", "--zoo", &zoo, "--config", &cfg, "--out", p(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d1"));
}

#[test]
fn help_exits_0() {
    let o = zgs(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["similarity", "logme", "graph", "embed", "train", "predict", "evaluate", "ablate", "synth"] {
        assert!(text.contains(sub), "{sub}");
    }
}
