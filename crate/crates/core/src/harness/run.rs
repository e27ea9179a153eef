use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::balance::{class_weights_from, LossConfig};
use crate::cleanse::cleanse;
use crate::corpus::{length_stats, load_corpus, load_csc, load_scicite_split, CitationInstance, Corpus, LabelScheme};
use crate::error::{Error, Result};
use crate::harness::config::{
    resolve_data_path, DatasetFormat, ExperimentConfig, SplitConfig, Strategy, ValidationMode, DEFAULT_HOLDOUT,
};
use crate::harness::manifest::{sha256_file, DatasetChecksum, FailureInfo, RunManifest, StageTiming, MANIFEST_FILE};
use crate::harness::report::{emit_report, ReportFormat, ReportRow};
use crate::metrics::{aggregate_cv, evaluate, CvReport, EvaluationReport};
use crate::models::pretrained::{parse_checkpoint, BackendRegistry, FineTuneParams};
use crate::models::{predict, train, Classifier, Sampling, Tokenizer, Topology, TrainReport};
use crate::rng;
use crate::splits::{fixed_split, fixed_split_indices, folds_assignment, kfold_with, Assignment};

pub struct RunOptions {
    /// Parent of the run directory; overrides the config's `output_dir`.
    pub out_dir: Option<PathBuf>,
    /// Fold-level parallelism; results do not depend on it.
    pub workers: usize,
    pub registry: BackendRegistry,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: None,
            workers: 1,
            registry: BackendRegistry::default(),
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub run_dir: PathBuf,
    /// Test-split report (fixed split) or fold-mean report (k-fold).
    pub evaluation: EvaluationReport,
    pub cv: Option<CvReport>,
    pub folds: Vec<EvaluationReport>,
    pub train_reports: Vec<TrainReport>,
    pub row: ReportRow,
    pub manifest: RunManifest,
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    fn record(&mut self, path: &Path) {
        let rel = self.rel(path);
        if !self.manifest.artifacts.contains(&rel) {
            self.manifest.artifacts.push(rel);
        }
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(&path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, serde_json::to_vec_pretty(value)?)
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Run) -> Result<T>) -> Result<T> {
        let started = Instant::now();
        let out = f(self);
        self.manifest.stages.push(StageTiming {
            stage: name.into(),
            seconds: started.elapsed().as_secs_f64(),
        });
        out.map_err(|e| Error::Stage {
            stage: name.into(),
            source: Box::new(e),
        })
    }

    fn finish(&mut self) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        self.record(&path);
        self.manifest.artifacts.sort();
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}

struct Data {
    main: Corpus,
    train: Option<Corpus>,
    val: Option<Corpus>,
    test: Option<Corpus>,
}

struct Job {
    name: String,
    index: u64,
    train: Corpus,
    test: Corpus,
    val: Option<Corpus>,
}

struct JobOutput {
    evaluation: EvaluationReport,
    train_report: TrainReport,
    files: Vec<(String, Vec<u8>)>,
    seconds: f64,
}

/// Concatenates corpora that share a scheme, prefixing colliding ids
/// with the corpus name.
fn concat(name: &str, scheme: &LabelScheme, parts: &[&Corpus]) -> Result<Corpus> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for part in parts {
        for inst in part.iter() {
            let mut inst: CitationInstance = inst.clone();
            if !seen.insert(inst.id.clone()) {
                inst.id = format!("{}:{}", part.name(), inst.id);
                seen.insert(inst.id.clone());
            }
            out.push(inst);
        }
    }
    Corpus::new(name, scheme.clone(), out)
}

fn ingest(cfg: &ExperimentConfig, run: &mut Run) -> Result<Data> {
    let ds = &cfg.dataset;
    for p in ds.paths() {
        let resolved = resolve_data_path(p);
        let (sha, bytes) = sha256_file(&resolved)?;
        if let Some(expected) = ds.checksums.get(p) {
            if !expected.eq_ignore_ascii_case(&sha) {
                return Err(Error::Checksum {
                    path: resolved,
                    expected: expected.clone(),
                    actual: sha,
                });
            }
        }
        run.manifest.datasets.push(DatasetChecksum {
            path: p.to_string(),
            sha256: sha,
            bytes,
        });
    }
    let path = |p: &Option<String>| resolve_data_path(p.as_deref().expect("validated"));
    match ds.format {
        DatasetFormat::Scicite => {
            let (train, _) = load_scicite_split(path(&ds.train), "train", &ds.fields)?;
            let val = match &ds.val {
                Some(_) => Some(load_scicite_split(path(&ds.val), "val", &ds.fields)?.0),
                None => None,
            };
            let (test, _) = load_scicite_split(path(&ds.test), "test", &ds.fields)?;
            let mut parts = vec![&train];
            parts.extend(val.as_ref());
            parts.push(&test);
            let main = concat("scicite", train.scheme(), &parts)?;
            Ok(Data {
                main,
                train: Some(train),
                val,
                test: Some(test),
            })
        }
        DatasetFormat::Csc => Ok(Data {
            main: load_csc(path(&ds.path))?,
            train: None,
            val: None,
            test: None,
        }),
        DatasetFormat::Corpus => {
            let c = load_corpus(path(&ds.path))?;
            if c.scheme().task() != cfg.task {
                return Err(Error::Config(format!(
                    "corpus task `{}` does not match config task `{}`",
                    c.scheme().task(),
                    cfg.task
                )));
            }
            Ok(Data {
                main: c,
                train: None,
                val: None,
                test: None,
            })
        }
    }
}

fn clean_stage(data: Data, run: &mut Run) -> Result<Data> {
    let mut ledger = Vec::new();
    let result = cleanse(&data.main)?;
    result.write_ledger_csv(&mut ledger)?;
    run.write("cleanse_ledger.csv", ledger)?;
    run.write("cleanse_report.md", result.report_markdown())?;
    let mut export = Vec::new();
    crate::corpus::write_corpus(&result.retained, &mut export)?;
    run.write("cleaned.jsonl", export)?;
    let keep: HashSet<&str> = result.retained.iter().map(|i| i.id.as_str()).collect();
    let filter = |c: &Corpus| -> Corpus {
        let pos: Vec<usize> = (0..c.len()).filter(|&i| keep.contains(c.instances()[i].id.as_str())).collect();
        c.select(c.name().to_string(), &pos)
    };
    Ok(Data {
        train: data.train.as_ref().map(filter),
        val: data.val.as_ref().map(filter),
        test: data.test.as_ref().map(filter),
        main: result.retained,
    })
}

fn split_stage(cfg: &ExperimentConfig, data: &Data, run: &mut Run) -> Result<Vec<Job>> {
    let seed = cfg.seed;
    let (jobs, assignment): (Vec<Job>, Assignment) = match &cfg.split {
        SplitConfig::Provided => {
            let train = data.train.clone().expect("scicite");
            let test = data.test.clone().expect("scicite");
            let mut rows = Vec::new();
            for (tag, c) in [("train", Some(&train)), ("val", data.val.as_ref()), ("test", Some(&test))] {
                if let Some(c) = c {
                    rows.extend(c.iter().map(|i| (i.id.clone(), tag.to_string())));
                }
            }
            let val = match cfg.validation {
                ValidationMode::Auto | ValidationMode::Provided => data.val.clone(),
                _ => None,
            };
            (
                vec![Job {
                    name: "fixed".into(),
                    index: 0,
                    train,
                    test,
                    val,
                }],
                Assignment { rows },
            )
        }
        SplitConfig::FixedRatio { ratio, stratified } => {
            let s = fixed_split_indices(&data.main, *ratio, seed, *stratified)?;
            let (train, test) = s.materialize(&data.main);
            (
                vec![Job {
                    name: "fixed".into(),
                    index: 0,
                    train,
                    test,
                    val: None,
                }],
                s.assignment(&data.main),
            )
        }
        SplitConfig::Kfold { k, stratified } => {
            let folds = kfold_with(&data.main, *k, seed, *stratified)?;
            let jobs = folds
                .iter()
                .map(|f| {
                    let (train, test) = f.materialize(&data.main);
                    Job {
                        name: format!("fold-{:02}", f.fold),
                        index: f.fold as u64,
                        train,
                        test,
                        val: None,
                    }
                })
                .collect();
            (jobs, folds_assignment(&data.main, &folds))
        }
    };
    let mut buf = Vec::new();
    assignment.write_csv(&mut buf)?;
    run.write("splits.csv", buf)?;
    Ok(jobs)
}

/// Loss and sampling for a strategy, with class weights from `train`.
pub fn strategy_plan(cfg: &ExperimentConfig, train: &Corpus) -> Result<(LossConfig, Sampling)> {
    let b = &cfg.balance;
    Ok(match cfg.strategy {
        Strategy::None => (LossConfig::cross_entropy(), Sampling::None),
        Strategy::Focal => {
            let alpha = if b.focal_alpha { class_weights_from(train)? } else { Vec::new() };
            (LossConfig::focal(b.focal_gamma, alpha), Sampling::None)
        }
        Strategy::Smote => (LossConfig::cross_entropy(), Sampling::Smote { k: b.smote_k }),
        Strategy::Upsample => (LossConfig::cross_entropy(), Sampling::Upsample),
        Strategy::ClassWeights => (LossConfig::weighted(class_weights_from(train)?), Sampling::None),
        Strategy::DownsampleBalanced => (LossConfig::cross_entropy(), Sampling::Downsample),
    })
}

fn fit(cfg: &ExperimentConfig, train_set: &Corpus, val: Option<&Corpus>, seed: u64, registry: &BackendRegistry) -> Result<(Classifier, TrainReport)> {
    let (loss, sampling) = strategy_plan(cfg, train_set)?;
    let mut model = cfg.model.clone();
    model.seed = seed;
    if model.topology == Topology::Pretrained {
        let ckpt = model.pretrained_checkpoint.as_deref().expect("validated");
        let (family, location) = parse_checkpoint(ckpt)?;
        let location = resolve_data_path(location);
        let params = FineTuneParams {
            train: cfg.training.clone(),
            loss,
            sampling,
            max_seq_len: model.max_seq_len,
            dropout: model.dropout,
        };
        registry
            .get(family)?
            .fine_tune(&location.to_string_lossy(), train_set, val, &params, seed)
    } else {
        train(&model, train_set, val, &loss, &sampling, &cfg.training)
    }
}

fn predictions_csv(test: &Corpus, probs: &[Vec<f64>], pred: &[usize]) -> Result<Vec<u8>> {
    let scheme = test.scheme();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "gold".into(), "label".into()];
    header.extend(scheme.labels().iter().map(|l| format!("p_{l}")));
    w.write_record(&header)?;
    for ((inst, p), &y) in test.iter().zip(probs).zip(pred) {
        let mut row = vec![inst.id.clone(), scheme.name(inst.label).to_string(), scheme.name(y).to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn run_job(cfg: &ExperimentConfig, job: &Job, registry: &BackendRegistry) -> Result<JobOutput> {
    let started = Instant::now();
    let seed = rng::derive(cfg.seed, 1000 + job.index);
    let (train_set, val) = match (&cfg.validation, &job.val) {
        (ValidationMode::None, _) => (job.train.clone(), None),
        (ValidationMode::Auto | ValidationMode::Provided, Some(v)) => (job.train.clone(), Some(v.clone())),
        (ValidationMode::Provided, None) => unreachable!("validated"),
        (ValidationMode::Auto, None) | (ValidationMode::Holdout { .. }, _) => {
            let fraction = match cfg.validation {
                ValidationMode::Holdout { fraction } => fraction,
                _ => DEFAULT_HOLDOUT,
            };
            let (t, v) = fixed_split(&job.train, 1.0 - fraction, rng::derive(seed, 7), true)?;
            (t, Some(v))
        }
    };
    let (clf, train_report) = fit(cfg, &train_set, val.as_ref(), seed, registry)?;
    let pred = predict(&clf, job.test.instances())?;
    let evaluation = evaluate(job.test.scheme(), &job.test.labels(), &pred.labels)?;
    let mut files = vec![
        (format!("{}/train_report.json", job.name), serde_json::to_vec_pretty(&train_report)?),
        (format!("{}/evaluation.json", job.name), serde_json::to_vec_pretty(&evaluation)?),
        (
            format!("{}/predictions.csv", job.name),
            predictions_csv(&job.test, &pred.probabilities, &pred.labels)?,
        ),
    ];
    if cfg.save_models {
        files.push((format!("{}/model.bin", job.name), crate::models::model_to_bytes(&clf)?));
    }
    Ok(JobOutput {
        evaluation,
        train_report,
        files,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn run_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    let parent = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    parent.join(cfg.run_id())
}

/// Human-readable row label for a config.
pub fn row_for(cfg: &ExperimentConfig, evaluation: &EvaluationReport) -> ReportRow {
    let mut configuration = cfg.model.architecture();
    if cfg.strategy != Strategy::None {
        configuration = format!("{configuration} + {}", cfg.strategy.as_str());
    }
    ReportRow::new(cfg.model.topology.display_name(), configuration, evaluation)
}

/// ingest, optional cleanse, split, train and evaluate (per fold for
/// k-fold), aggregate, report. Every written file is listed in the
/// manifest; on failure a partial manifest naming the stage is written.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let dir = run_dir(cfg, opts);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut run = Run {
        manifest: RunManifest::new(cfg),
        dir,
    };
    let outcome = execute(cfg, opts, &mut run);
    match outcome {
        Ok(mut result) => {
            run.manifest.status = "ok".into();
            run.finish()?;
            result.manifest = run.manifest.clone();
            Ok(result)
        }
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => "setup".into(),
            };
            let inner = match &e {
                Error::Stage { source, .. } => source.as_ref(),
                other => other,
            };
            run.manifest.status = "failed".into();
            run.manifest.failure = Some(FailureInfo {
                stage,
                kind: inner.kind().into(),
                message: inner.to_string(),
            });
            let _ = run.finish();
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, opts: &RunOptions, run: &mut Run) -> Result<RunResult> {
    run.stage("config", |run| run.write("config.json", cfg.canonical()))?;
    let mut data = run.stage("ingest", |run| ingest(cfg, run))?;
    if cfg.cleanse {
        data = run.stage("cleanse", |run| clean_stage(data, run))?;
    }
    run.stage("stats", |run| {
        let stats = length_stats(&data.main, &Tokenizer::default());
        run.write_json("lengths.json", &stats.to_plot_json())?;
        let mut buf = Vec::new();
        crate::corpus::class_distribution(&data.main)?.write_csv(&mut buf)?;
        run.write("distribution.csv", buf)
    })?;
    let jobs = run.stage("split", |run| split_stage(cfg, &data, run))?;
    let outputs: Vec<JobOutput> = run.stage("train", |_| {
        let work = |job: &Job| {
            run_job(cfg, job, &opts.registry).map_err(|e| Error::Stage {
                stage: job.name.clone(),
                source: Box::new(e),
            })
        };
        if opts.workers > 1 && jobs.len() > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(work).collect())
        } else {
            jobs.iter().map(work).collect()
        }
    })?;
    for (job, out) in jobs.iter().zip(&outputs) {
        run.manifest.stages.push(StageTiming {
            stage: format!("train:{}", job.name),
            seconds: out.seconds,
        });
    }
    let (evaluation, cv, row) = run.stage("report", |run| {
        for out in &outputs {
            for (name, bytes) in &out.files {
                run.write(name, bytes)?;
            }
        }
        let folds: Vec<EvaluationReport> = outputs.iter().map(|o| o.evaluation.clone()).collect();
        let (evaluation, cv) = if matches!(cfg.split, SplitConfig::Kfold { .. }) {
            let cv = aggregate_cv(&folds)?;
            run.write_json("cv_report.json", &cv)?;
            (cv.averaged.clone(), Some(cv))
        } else {
            (folds[0].clone(), None)
        };
        run.write_json("evaluation.json", &evaluation)?;
        run.write("evaluation.csv", evaluation.to_csv_string()?)?;
        let row = row_for(cfg, &evaluation);
        run.write_json("summary.json", &row)?;
        for format in [ReportFormat::Md, ReportFormat::Csv, ReportFormat::Json] {
            let path = emit_report(std::slice::from_ref(&row), format, &run.dir.clone(), "report")?;
            run.record(&path);
        }
        Ok((evaluation, cv, row))
    })?;
    Ok(RunResult {
        run_dir: run.dir.clone(),
        evaluation,
        folds: outputs.iter().map(|o| o.evaluation.clone()).collect(),
        train_reports: outputs.into_iter().map(|o| o.train_report).collect(),
        cv,
        row,
        manifest: run.manifest.clone(),
    })
}

/// Reads `summary.json` rows from finished run directories.
pub fn collect_rows(run_dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    run_dirs
        .iter()
        .map(|d| {
            let p = d.join("summary.json");
            let raw = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            Ok(serde_json::from_slice(&raw)?)
        })
        .collect()
}
