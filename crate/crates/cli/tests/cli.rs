use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic").join(file)
}

fn shapegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapegraph"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

/// Runs `cmd` on the synthetic data with small settings; `extra` flag/value
/// pairs replace the defaults of the same flag.
fn stage(cmd: &str, out: &Path, extra: &[(&str, &str)]) -> Output {
    let train = data("train.tsv");
    let test = data("test.tsv");
    let defaults = [
        ("--train", train.to_str().unwrap()),
        ("--test", test.to_str().unwrap()),
        ("--delimiter", "tab"),
        ("--out", out.to_str().unwrap()),
        ("-K", "6"),
        ("-l", "12"),
        ("-B", "8"),
        ("--epochs", "5"),
        ("--pool-factor", "4"),
        ("--walk-epochs", "2"),
        ("--num-rounds", "20"),
        ("--seed", "7"),
        ("--workers", "2"),
    ];
    let mut args = vec![cmd];
    for (flag, value) in defaults.iter().filter(|d| !extra.iter().any(|e| e.0 == d.0)).chain(extra) {
        args.extend([*flag, *value]);
    }
    shapegraph(&args)
}

fn ok(out: Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "exit {:?}: {stderr}", out.status);
    String::from_utf8(out.stdout).unwrap()
}

const FILES: [&str; 6] = [
    "shapelets.json",
    "graph.json",
    "embeddings.txt",
    "representations.csv",
    "model.json",
    "report.json",
];

#[test]
fn stages_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(ok(stage("extract", d, &[])).contains("extracted 6 shapelets"));
    assert!(ok(stage("graph", d, &[("--export", "edges")])).contains("6 vertices"));
    assert!(d.join("graph.edges").exists());
    ok(stage("graph", d, &[("--export", "dot")]));
    assert!(std::fs::read_to_string(d.join("graph.dot")).unwrap().contains("digraph"));
    assert!(ok(stage("embed", d, &[])).contains("6 vertices in 8 dimensions"));
    ok(stage("train", d, &[]));
    let table = ok(stage("evaluate", d, &[]));
    assert!(table.contains("confusion:"), "{table}");
    for f in FILES {
        assert!(d.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["f1"], 1.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    ok(stage("run", a.path(), &[]));
    let first: Vec<Vec<u8>> = FILES.iter().map(|f| std::fs::read(a.path().join(f)).unwrap()).collect();
    ok(stage("run", a.path(), &[]));
    for (f, bytes) in FILES.iter().zip(&first) {
        assert_eq!(&std::fs::read(a.path().join(f)).unwrap(), bytes, "{f}");
    }
    let b = tempfile::tempdir().unwrap();
    ok(stage("run", b.path(), &[("--workers", "1")]));
    for (f, bytes) in FILES.iter().zip(&first) {
        assert_eq!(&std::fs::read(b.path().join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn missing_train_file_is_a_one_line_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapegraph(&["extract", "--train", "/nonexistent/train.tsv", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    assert!(lines[0].starts_with("error[config]"), "{stderr}");
    assert!(lines[0].contains("train"), "{stderr}");
}

#[test]
fn bad_values_and_usage_errors() {
    let out = shapegraph(&["extract", "--set", "K=many"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let out = shapegraph(&["extract", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[usage]"));

    assert!(shapegraph(&["--help"]).status.success());
}

#[test]
fn evaluate_before_train_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = stage("evaluate", dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn preset_controls_shapelet_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = stage(
        "extract",
        dir.path(),
        &[("--preset", "eqs"), ("-K", "3"), ("-l", "24"), ("--epochs", "1"), ("--pool-factor", "2")],
    );
    assert!(ok(out).contains("extracted 3 shapelets (l = 24, m = 4)"));
    let set: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("shapelets.json")).unwrap()).unwrap();
    assert_eq!(set["shapelets"].as_array().unwrap().len(), 3);
    assert_eq!(set["shapelets"][0]["values"].as_array().unwrap().len(), 24);
}

#[test]
fn config_file_and_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\nK = 4\nwarp_mode = exact\n").unwrap();
    let out = stage("extract", dir.path(), &[("--config", conf.to_str().unwrap()), ("-K", "5"), ("--precision", "f32")]);
    assert!(ok(out).contains("extracted 5 shapelets"));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapegraph(&[
        "bench",
        "--pairs",
        "50",
        "--length",
        "16",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(ok(out).contains("50 pairs"));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(r["length"], 16);
    assert_eq!(r["greedy_never_below_exact"], true);
    assert!(r["max_cells_visited"].as_u64().unwrap() <= 32);
}
