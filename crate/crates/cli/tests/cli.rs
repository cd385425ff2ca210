use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use treeorg::PartitionTree;

fn treeorg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeorg"))
        .args(args)
        .env_remove("TREEORG_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = treeorg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small planted matrix in `dir/data`.
fn synth(dir: &TempDir) -> PathBuf {
    let data = dir.path().join("data");
    ok(&[
        "synth",
        "--blocks",
        "3x3",
        "--size",
        "30x24",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    data
}

fn stderr_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(err.trim_end().lines().count(), 1, "expected one line, got {err:?}");
    err.trim_end().to_owned()
}

#[test]
fn synth_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&[
            "synth",
            "--blocks",
            "4x4",
            "--size",
            "20x16",
            "--noise",
            "0.5",
            "--seed",
            seed,
            "--out",
            p(&out),
        ]);
        ["matrix.csv", "row_labels.csv", "col_labels.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a[0], run("c", "8")[0]);
    let text = String::from_utf8(a[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 17);
}

#[test]
fn biorg_writes_trees_trace_and_heatmap() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let run = dir.path().join("run");
    ok(&[
        "biorg",
        "--input",
        p(&data.join("matrix.csv")),
        "--iters",
        "2",
        "--weights",
        "data-driven",
        "--out",
        p(&run),
        "--heatmap",
        "--annotations",
        p(&data.join("col_labels.csv")),
    ]);
    for f in [
        "tree_x.json",
        "tree_y.json",
        "coherence.csv",
        "leaf_order_x.csv",
        "leaf_order_y.csv",
        "heatmap.svg",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let trace = fs::read_to_string(run.join("coherence.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    let svg = fs::read_to_string(run.join("heatmap.svg")).unwrap();
    assert!(svg.contains("#FFFFCC") && svg.contains("#800026"));
    assert_eq!(svg.matches("<rect").count(), 30 * 24 + 24);

    let printed = ok(&[
        "coherence",
        "--input",
        p(&data.join("matrix.csv")),
        "--tree-x",
        p(&run.join("tree_x.json")),
        "--tree-y",
        p(&run.join("tree_y.json")),
    ]);
    let value: f64 = printed.trim().parse().unwrap();
    let last: f64 = trace
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(value, last);
}

#[test]
fn downstream_commands_consume_biorg_output() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let matrix = data.join("matrix.csv");
    let run = dir.path().join("run");
    ok(&["biorg", "--input", p(&matrix), "--out", p(&run)]);
    let (tx, ty) = (run.join("tree_x.json"), run.join("tree_y.json"));

    let report = ok(&[
        "evaluate",
        "--tree",
        p(&ty),
        "--folders",
        "3",
        "--labels",
        p(&data.join("col_labels.csv")),
    ]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["folders"], 3);
    assert!(v["clustering"]["adjusted_rand_index"].as_f64().unwrap() > 0.99);

    let dist = dir.path().join("d.csv");
    ok(&[
        "metric",
        "--input",
        p(&matrix),
        "--tree",
        p(&tx),
        "--tree",
        p(&tx),
        "--out",
        p(&dist),
    ]);
    let text = fs::read_to_string(&dist).unwrap();
    assert_eq!(text.lines().count(), 25);

    let triplets = dir.path().join("t/difference.csv");
    ok(&[
        "transform",
        "--tree",
        p(&ty),
        "--kind",
        "difference",
        "--out",
        p(&triplets),
    ]);
    assert!(fs::read_to_string(&triplets).unwrap().starts_with("row,col,value\n"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(triplets.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["cols"], 24);

    let refined = dir.path().join("refined");
    ok(&[
        "refine",
        "--input",
        p(&matrix),
        "--tree-x",
        p(&tx),
        "--tree-y",
        p(&ty),
        "--axis",
        "both",
        "--out",
        p(&refined),
    ]);
    let c = fs::read_to_string(refined.join("coherence.csv")).unwrap();
    assert!(c.starts_with("stage,coherence\nglobal,"));
    assert!(refined.join("local_trees.json").is_file());

    let inserted = dir.path().join("ins");
    ok(&[
        "insert",
        "--input",
        p(&matrix),
        "--tree-x",
        p(&tx),
        "--tree-y",
        p(&ty),
        "--new",
        p(&matrix),
        "--out",
        p(&inserted),
    ]);
    assert_eq!(
        fs::read_to_string(inserted.join("assignments.csv"))
            .unwrap()
            .lines()
            .count(),
        25
    );

    let built = dir.path().join("rows.json");
    ok(&[
        "build-tree",
        "--input",
        p(&matrix),
        "--axis",
        "rows",
        "--out",
        p(&built),
    ]);
    assert!(fs::read_to_string(&built).unwrap().contains("\"axis_size\": 30"));
}

#[test]
fn survival_evaluation() {
    let dir = TempDir::new().unwrap();
    let tree = dir.path().join("t.json");
    PartitionTree::from_partitions(
        4,
        vec![
            vec![vec![0], vec![1], vec![2], vec![3]],
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![0, 1, 2, 3]],
        ],
    )
    .unwrap()
    .write(&tree)
    .unwrap();
    let surv = dir.path().join("s.csv");
    fs::write(&surv, "id,time,event,group\na,1,1,9\nb,2,1,9\nc,10,1,9\nd,11,1,9\n").unwrap();
    let out = treeorg(&["evaluate", "--tree", p(&tree), "--level", "1", "--survival", p(&surv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = (7.0f64 / 6.0).powi(2) / (17.0 / 36.0);
    assert!((v["log_rank"]["statistic"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert_eq!(v["log_rank"]["df"], 1);
}

#[test]
fn tab_and_comma_inputs_agree() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let comma = data.join("matrix.csv");
    let tab = data.join("matrix.tsv");
    fs::write(&tab, fs::read_to_string(&comma).unwrap().replace(',', "\t")).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["biorg", "--input", p(&comma), "--out", p(&a)]);
    ok(&["biorg", "--input", p(&tab), "--out", p(&b)]);
    for f in ["tree_x.json", "tree_y.json", "coherence.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let matrix = data.join("matrix.csv");
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# one pass only\niters = 1\nweights = size\nbeta = 0.5\n").unwrap();
    let one = dir.path().join("one");
    ok(&["biorg", "--config", p(&cfg), "--input", p(&matrix), "--out", p(&one)]);
    assert_eq!(
        fs::read_to_string(one.join("coherence.csv")).unwrap().lines().count(),
        2
    );
    let three = dir.path().join("three");
    ok(&[
        "biorg",
        "--config",
        p(&cfg),
        "--iters",
        "3",
        "--input",
        p(&matrix),
        "--out",
        p(&three),
    ]);
    assert_eq!(
        fs::read_to_string(three.join("coherence.csv")).unwrap().lines().count(),
        4
    );

    fs::write(&cfg, "colour = red\n").unwrap();
    let out = treeorg(&["biorg", "--config", p(&cfg), "--input", p(&matrix), "--out", p(&one)]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("unknown key"));
}

#[test]
fn errors_are_single_machine_readable_lines() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,a,b\nx,1,2\ny,3,oops\n").unwrap();
    let out = treeorg(&["build-tree", "--input", p(&bad), "--out", p(&dir.path().join("t.json"))]);
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=parse:"), "{line}");
    assert!(line.contains("line 3") && line.contains("column 3"), "{line}");

    let out = treeorg(&[
        "coherence",
        "--input",
        p(&dir.path().join("missing.csv")),
        "--tree-x",
        "a",
        "--tree-y",
        "b",
    ]);
    assert!(stderr_line(&out).starts_with("error kind=io:"));

    let out = treeorg(&["biorg", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error kind=usage:"));

    let out = treeorg(&["biorg", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("--input"));

    let out = treeorg(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("biorg"));
}
