mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use citeimpact::corpus::LabelScheme;
use citeimpact::harness::{
    render_report, run_experiment, ReportFormat, RunManifest, RunOptions, SplitConfig, Strategy, ValidationMode,
    MANIFEST_FILE,
};
use citeimpact::models::{baseline_grid, load_model, predict};
use citeimpact::Error;

use common::{counts_corpus, experiment, keyword_corpus};

fn opts(dir: &Path, workers: usize) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        workers,
        ..Default::default()
    }
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

/// `fold -> ids` from a run's predictions files.
fn predicted_ids(run_dir: &Path) -> BTreeMap<String, BTreeSet<String>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(run_dir).unwrap() {
        let p = e.unwrap().path();
        let preds = p.join("predictions.csv");
        if preds.exists() {
            let mut r = csv::Reader::from_path(&preds).unwrap();
            let ids = r.records().map(|x| x.unwrap()[0].to_string()).collect();
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), ids);
        }
    }
    out
}

#[test]
fn ten_fold_cv_on_synthetic_sentiment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = keyword_corpus(LabelScheme::sentiment(), &[40, 60, 200], 3);
    let mut cfg = experiment(dir.path(), &corpus, SplitConfig::Kfold { k: 10, stratified: true });
    cfg.validation = ValidationMode::None;
    cfg.training.epochs = 15;
    let result = run_experiment(&cfg, &opts(&dir.path().join("runs"), 1)).unwrap();

    assert_eq!(result.folds.len(), 10);
    let cv = result.cv.as_ref().unwrap();
    assert_eq!(cv.folds, 10);
    assert_eq!(cv.pooled.instances, 300);
    assert!(cv.averaged.macro_f1 >= 0.9, "macro-F1 {}", cv.averaged.macro_f1);

    // Each fold trains on exactly the complement of its test fold.
    let all: BTreeSet<String> = corpus.iter().map(|i| i.id.clone()).collect();
    let folds = predicted_ids(&result.run_dir);
    assert_eq!(folds.len(), 10);
    let mut union = BTreeSet::new();
    for (job, test) in &folds {
        assert!(union.is_disjoint(test), "{job} overlaps an earlier fold");
        union.extend(test.iter().cloned());
    }
    assert_eq!(union, all);
    for (report, (_, test)) in result.train_reports.iter().zip(&folds) {
        assert_eq!(report.train_instances, all.len() - test.len());
        assert_eq!(report.monitor, "train");
    }

    // Manifest completeness: every file written is listed, and nothing else.
    let manifest = RunManifest::load(result.run_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.status, "ok");
    assert!(manifest.failure.is_none());
    assert_eq!(manifest.datasets.len(), 1);
    assert_eq!(manifest.run_id, cfg.run_id());
    let on_disk = files_under(&result.run_dir);
    let listed: BTreeSet<String> = manifest.artifacts.iter().cloned().collect();
    assert_eq!(listed, on_disk);
    for stage in ["config", "ingest", "stats", "split", "train", "report"] {
        assert!(manifest.stages.iter().any(|s| s.stage == stage), "missing stage {stage}");
    }
    for f in ["cv_report.json", "report.md", "report.csv", "report.json", "splits.csv", "lengths.json"] {
        assert!(listed.contains(f), "{f} not written");
    }

    // A saved fold model reloads and reproduces that fold's predictions.
    let model = load_model(result.run_dir.join("fold-00/model.bin")).unwrap();
    let test_ids = &folds["fold-00"];
    let test: Vec<_> = corpus.iter().filter(|i| test_ids.contains(&i.id)).cloned().collect();
    let p = predict(&model, &test).unwrap();
    let mut r = csv::Reader::from_path(result.run_dir.join("fold-00/predictions.csv")).unwrap();
    let saved: BTreeMap<String, String> = r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[2].to_string())).collect();
    for (inst, &l) in test.iter().zip(&p.labels) {
        assert_eq!(saved[&inst.id], LabelScheme::sentiment().name(l));
    }

    // Re-running from the manifest's config reproduces the report.
    let again = run_experiment(&manifest.config, &opts(&dir.path().join("rerun"), 1)).unwrap();
    assert_eq!(again.evaluation, result.evaluation);
    assert_eq!(again.cv, result.cv);
}

#[test]
fn reports_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = keyword_corpus(LabelScheme::sentiment(), &[12, 18, 40], 5);
    let mut cfg = experiment(dir.path(), &corpus, SplitConfig::Kfold { k: 5, stratified: true });
    cfg.strategy = Strategy::DownsampleBalanced;
    cfg.save_models = false;
    let one = run_experiment(&cfg, &opts(&dir.path().join("w1"), 1)).unwrap();
    let four = run_experiment(&cfg, &opts(&dir.path().join("w4"), 4)).unwrap();
    for f in ["cv_report.json", "evaluation.json", "report.csv", "fold-03/predictions.csv"] {
        assert_eq!(
            fs::read(one.run_dir.join(f)).unwrap(),
            fs::read(four.run_dir.join(f)).unwrap(),
            "{f} differs"
        );
    }
    // Downsampled folds train on the negative-class count per class.
    for r in &one.train_reports {
        assert_eq!(r.train_instances % 3, 0);
    }
}

#[test]
fn stratification_error_names_the_class() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = counts_corpus(LabelScheme::sentiment(), &[20, 5, 40]);
    let cfg = experiment(dir.path(), &corpus, SplitConfig::Kfold { k: 10, stratified: true });
    let err = run_experiment(&cfg, &opts(&dir.path().join("runs"), 1)).unwrap_err();
    assert!(err.to_string().contains("negative"), "{err}");
    match &err {
        Error::Stage { stage, source } => {
            assert_eq!(stage, "split");
            assert!(matches!(**source, Error::InfeasibleStratification { count: 5, k: 10, .. }));
        }
        other => panic!("{other:?}"),
    }
    let manifest = RunManifest::load(dir.path().join("runs").join(cfg.run_id()).join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.status, "failed");
    let failure = manifest.failure.unwrap();
    assert_eq!((failure.stage.as_str(), failure.kind.as_str()), ("split", "infeasible_stratification"));
}

#[test]
fn baseline_grid_yields_sorted_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = keyword_corpus(LabelScheme::intent(), &[8, 8, 8], 9);
    let mut rows = Vec::new();
    for model in baseline_grid().into_iter().rev() {
        let mut cfg = experiment(dir.path(), &corpus, SplitConfig::FixedRatio { ratio: 0.7, stratified: true });
        cfg.model = model;
        cfg.model.embedding_dim = 8;
        cfg.training.epochs = 1;
        cfg.validation = ValidationMode::None;
        cfg.save_models = false;
        rows.push(run_experiment(&cfg, &opts(&dir.path().join("runs"), 1)).unwrap().row);
    }
    let csv = render_report(&rows, ReportFormat::Csv).unwrap();
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let got: Vec<(String, String)> = r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[1].to_string())).collect();
    // Topology block order, then (layers, units, widths) ascending.
    let mut grid = baseline_grid();
    grid.sort_by_key(|m| (m.topology, m.layers, m.units, m.conv_widths.clone()));
    let want: Vec<(String, String)> = grid
        .iter()
        .map(|m| (m.topology.display_name().to_string(), m.architecture()))
        .collect();
    assert_eq!(want[0].1, "L 3 F 100 C 2,4,6");
    assert_eq!(got, want);
}

#[test]
fn inputs_are_never_modified() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = common::planted_corpus(4, 40);
    let mut cfg = experiment(dir.path(), &corpus, SplitConfig::FixedRatio { ratio: 0.7, stratified: false });
    cfg.cleanse = true;
    cfg.save_models = false;
    let path = cfg.dataset.path.clone().unwrap();
    let before = fs::read(&path).unwrap();
    let result = run_experiment(&cfg, &opts(&dir.path().join("runs"), 1)).unwrap();
    assert_eq!(fs::read(&path).unwrap(), before);
    assert!(result.manifest.artifacts.iter().any(|a| a == "cleanse_ledger.csv"));
}

#[test]
fn checksum_mismatch_fails_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = counts_corpus(LabelScheme::intent(), &[5, 5, 5]);
    let mut cfg = experiment(dir.path(), &corpus, SplitConfig::FixedRatio { ratio: 0.7, stratified: true });
    let path = cfg.dataset.path.clone().unwrap();
    cfg.dataset.checksums.insert(path, "0".repeat(64));
    let err = run_experiment(&cfg, &opts(&dir.path().join("runs"), 1)).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "ingest"), "{err}");
}
