mod common;

use std::path::Path;

use common::*;
use shapegraph::pipeline::{
    self, bench_pairs, BenchReport, GraphArtifact, PipelineConfig, BENCH_SCHEMA, EMBEDDINGS_FILE, GRAPH_FILE,
    MODEL_FILE, REPORT_FILE, REPRESENTATIONS_FILE, SHAPELETS_FILE,
};
use shapegraph::shapelet::ShapeletSet;
use shapegraph::{Error, ModelBundle};

fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("delimiter", "tab"),
        ("K", "6"),
        ("l", "12"),
        ("B", "8"),
        ("epochs", "5"),
        ("pool_factor", "4"),
        ("walks_per_vertex", "5"),
        ("walk_length", "20"),
        ("walk_epochs", "2"),
        ("num_rounds", "20"),
        ("max_depth", "3"),
        ("seed", "7"),
        ("workers", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.train = Some(synthetic_train());
    cfg.test = Some(synthetic_test());
    cfg.out = out.to_path_buf();
    cfg
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

const ARTIFACTS: [&str; 6] = [
    SHAPELETS_FILE,
    GRAPH_FILE,
    EMBEDDINGS_FILE,
    REPRESENTATIONS_FILE,
    MODEL_FILE,
    REPORT_FILE,
];

#[test]
fn stages_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let report = pipeline::run_all::<f64>(&cfg).unwrap();
    let first: Vec<Vec<u8>> = ARTIFACTS.iter().map(|f| read(dir.path(), f)).collect();

    pipeline::extract_stage::<f64>(&cfg).unwrap();
    pipeline::graph_stage::<f64>(&cfg).unwrap();
    pipeline::embed_stage::<f64>(&cfg).unwrap();
    pipeline::train_stage::<f64>(&cfg).unwrap();
    let again = pipeline::evaluate_stage::<f64>(&cfg).unwrap();
    assert_eq!(report, again);
    for (f, bytes) in ARTIFACTS.iter().zip(&first) {
        assert_eq!(&read(dir.path(), f), bytes, "{f} changed");
    }
}

#[test]
fn separable_fixture_is_classified_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline::run_all::<f64>(&small_config(dir.path())).unwrap();
    assert_eq!(report.f1, 1.0);
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.confusion.total(), 20);
}

#[test]
fn bundle_reproduces_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let report = pipeline::run_all::<f64>(&cfg).unwrap();
    let bundle = ModelBundle::<f64>::load(dir.path().join(MODEL_FILE)).unwrap();
    assert_eq!(bundle.report.as_ref(), Some(&report));
    let test = cfg.load_test::<f64>(bundle.label_map).unwrap().unwrap();
    assert_eq!(bundle.evaluate(&test).unwrap(), report);

    let reloaded: ModelBundle<f64> = serde_json::from_slice(&read(dir.path(), MODEL_FILE)).unwrap();
    assert_eq!(reloaded, bundle);
}

#[test]
fn bundle_rejects_foreign_versions_and_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run_all::<f64>(&small_config(dir.path())).unwrap();
    let path = dir.path().join(MODEL_FILE);
    let mut json: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();

    let mut wrong = json.clone();
    wrong["version"] = "shapegraph.model/9.0".into();
    std::fs::write(&path, wrong.to_string()).unwrap();
    assert!(matches!(ModelBundle::<f64>::load(&path), Err(Error::Artifact(_))));

    json["embeddings"]["vectors"].as_array_mut().unwrap().pop();
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(matches!(ModelBundle::<f64>::load(&path), Err(Error::Dimension(_))));
}

#[test]
fn model_rejects_data_of_another_shape() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run_all::<f64>(&small_config(dir.path())).unwrap();
    let bundle = ModelBundle::<f64>::load(dir.path().join(MODEL_FILE)).unwrap();
    let other = load_synthetic(16);
    assert!(matches!(bundle.features(&other), Err(Error::Dimension(_))));
}

#[test]
fn later_stages_need_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let err = pipeline::graph_stage::<f64>(&cfg).unwrap_err();
    assert!(err.to_string().contains("extract"), "{err}");
    let err = pipeline::evaluate_stage::<f64>(&cfg).unwrap_err();
    assert!(err.to_string().contains("train"), "{err}");
}

#[test]
fn static_run_writes_unit_factors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.set("static", "true").unwrap();
    pipeline::run_all::<f64>(&cfg).unwrap();
    let set = ShapeletSet::<f64>::load(dir.path().join(SHAPELETS_FILE)).unwrap();
    assert!(set.static_factors);
    assert!(set.shapelets.iter().all(|s| s.w.iter().chain(&s.u).all(|&x| x == 1.0)));
}

#[test]
fn single_precision_run() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline::run_all::<f32>(&small_config(dir.path())).unwrap();
    assert!(report.f1 > 0.8, "f1 {}", report.f1);
    let g = GraphArtifact::<f32>::load(dir.path().join(GRAPH_FILE)).unwrap();
    assert_eq!(g.graph.vertex_count, 6);
}

#[test]
fn artifacts_do_not_depend_on_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline::run_all::<f64>(&small_config(a.path())).unwrap();
    let mut cfg = small_config(b.path());
    cfg.workers = Some(1);
    pipeline::run_all::<f64>(&cfg).unwrap();
    for f in ARTIFACTS {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn evaluate_without_test_file_cross_validates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.test = None;
    cfg.folds = 3;
    let report = pipeline::run_all::<f64>(&cfg).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.confusion.total(), 40);
}

#[test]
fn greedy_matches_exact_on_monotone_pairs() {
    // Ramps with step s offset by c < s/2: the diagonal is the cheapest
    // alignment and also the cheapest step from every diagonal cell.
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (1..=20)
        .map(|k| {
            let s = 0.01 * k as f64;
            let c = s * (k % 5) as f64 / 10.0;
            let a: Vec<f64> = (0..16).map(|t| t as f64 * s).collect();
            let b: Vec<f64> = a.iter().map(|x| x + c).collect();
            (a, b)
        })
        .collect();
    let r = bench_pairs(&pairs, 16, 16).unwrap();
    assert_eq!(r.max_relative_gap, 0.0);
    assert!(r.greedy_never_below_exact);
    assert!(r.max_cells_visited <= r.cell_bound);
}

#[test]
fn bench_report_is_versioned_json() {
    let ds = load_synthetic(12);
    let cfg = pipeline::BenchConfig {
        pairs: 100,
        seed: 1,
        ..Default::default()
    };
    let r = pipeline::bench(&cfg, Some(&ds)).unwrap();
    assert_eq!((r.version.as_str(), r.pairs, r.length, r.window), (BENCH_SCHEMA, 100, 12, 6));
    let back: BenchReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(matches!(bench_pairs(&[(vec![0.0; 3], vec![0.0; 4])], 3, 2), Err(Error::Dimension(_))));
}
