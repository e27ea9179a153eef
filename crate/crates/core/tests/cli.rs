mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::{csc_shaped_text, write_scicite, SCICITE_COUNTS};

fn cli(args: &[&str], data_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_citeimpact"));
    cmd.args(args).env_remove("CITEIMPACT_DATA_DIR");
    if let Some(d) = data_dir {
        cmd.env("CITEIMPACT_DATA_DIR", d);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_of(out: &Output) -> Value {
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr))
    });
    err["error"].clone()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn clean_writes_export_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("csc.txt");
    fs::write(&input, csc_shaped_text(1)).unwrap();
    let before = fs::read(&input).unwrap();
    let out = dir.path().join("csc_clean");
    ok(&cli(&["clean", "--input", s(&input), "--out", s(&out), "--format", "csv"], None));
    assert_eq!(fs::read(&input).unwrap(), before);

    let ledger = csv_rows(&out.join("ledger.csv"));
    let col = |row: &Vec<String>, i: usize| row[i].parse::<usize>().unwrap();
    let retained: Vec<usize> = ledger.iter().take(3).map(|r| col(r, 2)).collect();
    let removed: Vec<usize> = ledger.iter().take(3).map(|r| col(r, 5)).collect();
    assert!(ledger.iter().all(|r| col(r, 3) + col(r, 4) == col(r, 5)));
    assert_eq!(retained, [728, 253, 6999]);
    assert_eq!(removed, [101, 27, 628]);
    let corpus = citeimpact::corpus::load_corpus(out.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.class_counts(), [728, 253, 6999]);
    assert!(out.join("cleanse_report.md").exists());
}

#[test]
fn stats_reports_distribution_and_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let [train, val, test] = write_scicite(dir.path(), SCICITE_COUNTS, 2);
    let out = dir.path().join("stats");
    ok(&cli(&["stats", "--input", s(&train), "--out", s(&out)], None));
    let rows = csv_rows(&out.join("distribution.csv"));
    let counts: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(counts, ["1109", "2294", "4840", "8243"]);

    let all = dir.path().join("all");
    let json = ok(&cli(
        &["stats", "--input", s(&train), "--input", s(&val), "--input", s(&test), "--out", s(&all), "--format", "json"],
        None,
    ));
    let rows = csv_rows(&all.join("distribution.csv"));
    let got: Vec<(&str, &str)> = rows.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(got[..3], [("1491", "13.53"), ("3154", "28.62"), ("6375", "57.85")]);
    let printed: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(printed[0]["class"], "result");

    let hist: Value = serde_json::from_slice(&fs::read(all.join("lengths_hist.json")).unwrap()).unwrap();
    assert!(hist.is_object());
    assert!(all.join("lengths.csv").exists());
}

#[test]
fn relative_inputs_resolve_against_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("csc.txt"), "a\tb\tp\tgood work\nc\td\to\tprior work\n").unwrap();
    let out = ok(&cli(&["stats", "--input", "csc.txt", "--format", "csv"], Some(dir.path())));
    assert!(out.starts_with("class,count"));
    let err = error_of(&cli(&["stats", "--input", "csc.txt"], None));
    assert_eq!(err["kind"], "io");
}

#[test]
fn split_assignment_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("csc.txt");
    fs::write(&input, csc_shaped_text(3)).unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&cli(&["split", "--input", s(&input), "--k", "10", "--seed", seed, "--out", s(&out)], None));
        fs::read(out.join("assignment.csv")).unwrap()
    };
    let a = run("7", "a");
    assert_eq!(a, run("7", "b"));
    assert_ne!(a, run("8", "c"));
    let rows = csv_rows(&dir.path().join("a/assignment.csv"));
    assert_eq!(rows.len(), 8736);
    let folds: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(folds.len(), 10);

    let fixed = dir.path().join("fixed");
    ok(&cli(&["split", "--input", s(&input), "--ratio", "0.7", "--out", s(&fixed)], None));
    let rows = csv_rows(&fixed.join("assignment.csv"));
    let train = rows.iter().filter(|r| r[1] == "train").count();
    assert!((train as f64 - 0.7 * 8736.0).abs() <= 3.0, "{train}");
    assert!(fixed.join("train.jsonl").exists() && fixed.join("test.jsonl").exists());
}

#[test]
fn evaluate_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("g.csv");
    fs::write(&f, "id,label\n1,positive\n2,neutral\n3,negative\n4,neutral\n").unwrap();
    let out = ok(&cli(&["evaluate", "--gold", s(&f), "--pred", s(&f), "--format", "json"], None));
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["micro_f1"], 1.0);
    assert_eq!(r["macro_f1"], 1.0);

    let p = dir.path().join("p.csv");
    fs::write(&p, "label,id\nneutral,4\nneutral,3\npositive,1\nneutral,2\n").unwrap();
    let out = ok(&cli(&["evaluate", "--gold", s(&f), "--pred", s(&p), "--format", "json"], None));
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["micro_f1"], 0.75);
}

#[test]
fn failures_are_json_with_nonzero_exit() {
    let out = cli(&["stats", "--input", "/nonexistent/file.txt"], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "io");

    let out = cli(&["stats", "--bogus"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "usage");

    let out = cli(&["train"], None);
    assert_eq!(error_of(&out)["kind"], "invalid_argument");

    let out = cli(&["report", "--runs", "/nonexistent/run"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fetch_verifies_existing_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("data.txt"), "abc").unwrap();
    let sha = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    let out = ok(&cli(
        &["fetch", "--url", "http://127.0.0.1:9/data.txt", "--sha256", sha, "--out", s(dir.path())],
        None,
    ));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["status"], "verified");
    let out = cli(
        &["fetch", "--url", "http://127.0.0.1:9/data.txt", "--sha256", &"0".repeat(64)],
        Some(dir.path()),
    );
    assert_eq!(error_of(&out)["kind"], "checksum");
}

#[test]
fn train_cv_and_report_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::keyword_corpus(citeimpact::corpus::LabelScheme::sentiment(), &[10, 10, 20], 4);
    citeimpact::corpus::export_corpus(&corpus, dir.path().join("sent.jsonl")).unwrap();
    let config = |split: &str, strategy: &str| {
        format!(
            r#"
            name = "cli"
            task = "sentiment"
            split = {split}
            strategy = "{strategy}"
            [dataset]
            format = "corpus"
            path = "sent.jsonl"
            [model]
            topology = "cnn"
            layers = 2
            units = 8
            conv_widths = [2, 3]
            embedding_dim = 8
            dropout = 0.0
            [training]
            epochs = 3
            learning_rate = 0.01
            "#
        )
    };
    let fixed = dir.path().join("fixed.toml");
    fs::write(&fixed, config(r#"{ kind = "fixed_ratio", ratio = 0.7 }"#, "focal")).unwrap();
    let cv = dir.path().join("cv.toml");
    fs::write(&cv, config(r#"{ kind = "kfold", k = 4 }"#, "none")).unwrap();
    let runs = dir.path().join("runs");

    ok(&cli(&["train", "--config", s(&fixed), "--out", s(&runs)], Some(dir.path())));
    let err = error_of(&cli(&["train", "--config", s(&cv), "--out", s(&runs)], Some(dir.path())));
    assert_eq!(err["kind"], "invalid_argument");
    ok(&cli(&["cv", "--config", s(&cv), "--out", s(&runs), "--workers", "2"], Some(dir.path())));

    let run_dirs: Vec<String> = fs::read_dir(&runs)
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    assert_eq!(run_dirs.len(), 2);
    let mut args = vec!["report", "--format", "csv"];
    for d in &run_dirs {
        args.extend(["--runs", d.as_str()]);
    }
    let table = ok(&cli(&args, None));
    let mut r = csv::Reader::from_reader(table.as_bytes());
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "L 2 F 8 C 2,3");
    assert_eq!(&rows[1][1], "L 2 F 8 C 2,3 + focal");

    // A saved model scores a corpus through `evaluate --model`.
    let cv_dir = run_dirs.iter().find(|d| Path::new(d).join("cv_report.json").exists()).unwrap();
    let model = Path::new(cv_dir).join("fold-00/model.bin");
    let out = ok(&cli(
        &["evaluate", "--model", s(&model), "--input", s(&dir.path().join("sent.jsonl")), "--format", "json"],
        None,
    ));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["instances"], 40);

    // An unknown config key is a config error.
    fs::write(&fixed, format!("bogus = 1\n{}", config(r#"{ kind = "provided" }"#, "none"))).unwrap();
    assert_eq!(error_of(&cli(&["train", "--config", s(&fixed)], None))["kind"], "config");
}
