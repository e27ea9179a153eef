//! `citeimpact` command line.
//!
//! Every subcommand is a thin wrapper over the library. Failures print a
//! JSON object `{"error": {"kind", "message", "stage"?}}` on stderr and
//! exit nonzero (1 for runtime errors, 2 for usage errors).

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use citeimpact::cleanse::cleanse;
use citeimpact::corpus::{
    class_distribution, export_corpus, length_stats_with, load_corpus, load_csc, load_scicite_split, Corpus,
    LabelScheme, SciciteFields, Task, CORPUS_FORMAT,
};
use citeimpact::error::{Error, Result};
use citeimpact::harness::{
    collect_rows, fetch, render_report, resolve_data_path, run_experiment, ExperimentConfig, FetchOutcome,
    ReportFormat, RunOptions, SplitConfig, DATA_DIR_ENV,
};
use citeimpact::metrics::{evaluate, EvaluationReport};
use citeimpact::models::{load_model, predict, Tokenizer};
use citeimpact::splits::{fixed_split_indices, folds_assignment, kfold_with};

#[derive(Parser)]
#[command(name = "citeimpact", version, about = "Citation intent and sentiment analysis toolkit")]
struct Cli {
    /// Experiment config (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel workers for cross-validation folds.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Md => ReportFormat::Md,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputKind {
    /// Detect from the first record.
    Auto,
    Scicite,
    Csc,
    Corpus,
}

#[derive(Args)]
struct Input {
    /// Dataset file; repeat to concatenate (e.g. all three SciCite splits).
    /// Relative paths are resolved against $CITEIMPACT_DATA_DIR when set.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputKind::Auto)]
    dataset: InputKind,
}

#[derive(Subcommand)]
enum Command {
    /// Class distribution and length statistics.
    Stats {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 10)]
        bucket_width: usize,
    },
    /// Two-step cleansing: drop conflicting duplicates, then repeated duplicates.
    Clean {
        #[command(flatten)]
        input: Input,
    },
    /// Seeded fixed-ratio or k-fold split assignment.
    Split {
        #[command(flatten)]
        input: Input,
        /// Train fraction of a fixed split.
        #[arg(long, default_value_t = 0.7, conflicts_with = "k")]
        ratio: f64,
        /// Number of folds (k-fold instead of a fixed split).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        unstratified: bool,
    },
    /// Run a fixed-split experiment from --config.
    Train,
    /// Score predictions against gold labels (CSV with `id,label`), or a
    /// saved model against a corpus.
    Evaluate {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, requires = "input")]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Run a k-fold cross-validation experiment from --config.
    Cv {
        /// Overrides the config split with stratified k-fold.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Combine finished runs into one results table.
    Report {
        #[arg(long, required = true)]
        runs: Vec<PathBuf>,
    },
    /// Download a dataset file and verify its sha256.
    Fetch {
        #[arg(long)]
        url: String,
        #[arg(long)]
        sha256: String,
        /// Destination file name (inside --out, or $CITEIMPACT_DATA_DIR).
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Intent,
    Sentiment,
}

fn resolve(p: &Path) -> PathBuf {
    resolve_data_path(&p.to_string_lossy())
}

fn detect(path: &Path) -> Result<InputKind> {
    let f = fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        return Ok(match serde_json::from_str::<serde_json::Value>(t) {
            Ok(v) if v.get("format").and_then(|f| f.as_str()) == Some(CORPUS_FORMAT) => InputKind::Corpus,
            Ok(v) if v.is_object() => InputKind::Scicite,
            _ => InputKind::Csc,
        });
    }
    Err(Error::NoRecords {
        path: path.to_path_buf(),
        skipped: 0,
        first_problem: "file has no content lines".into(),
    })
}

fn load_one(path: &Path, kind: InputKind) -> Result<Corpus> {
    let kind = match kind {
        InputKind::Auto => detect(path)?,
        k => k,
    };
    match kind {
        InputKind::Scicite => {
            let split = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(load_scicite_split(path, &split, &SciciteFields::default())?.0)
        }
        InputKind::Csc => load_csc(path),
        InputKind::Corpus => load_corpus(path),
        InputKind::Auto => unreachable!(),
    }
}

fn load_input(input: &Input) -> Result<Corpus> {
    let mut corpora = Vec::new();
    for p in &input.input {
        corpora.push(load_one(&resolve(p), input.dataset)?);
    }
    if corpora.len() == 1 {
        return Ok(corpora.pop().expect("one corpus"));
    }
    let scheme = corpora[0].scheme().clone();
    if corpora.iter().any(|c| c.scheme() != &scheme) {
        return Err(Error::InvalidArgument("inputs use different label schemes".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::new();
    for c in &corpora {
        for inst in c.iter() {
            let mut inst = inst.clone();
            if !seen.insert(inst.id.clone()) {
                inst.id = format!("{}:{}", c.name(), inst.id);
                seen.insert(inst.id.clone());
            }
            all.push(inst);
        }
    }
    Corpus::new("combined", scheme, all)
}

fn out_dir(cli: &Cli) -> Result<Option<PathBuf>> {
    if let Some(d) = &cli.out {
        fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.clone(),
            source: e,
        })?;
    }
    Ok(cli.out.clone())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn table(header: &[&str], rows: &[Vec<String>], format: Format) -> Result<String> {
    Ok(match format {
        Format::Md => {
            let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
            for r in rows {
                s.push_str(&format!("| {} |\n", r.join(" | ")));
            }
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io {
                path: "<csv>".into(),
                source: e.into_error(),
            })?)
            .expect("utf-8")
        }
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::Value::Object(
                        header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect(),
                    )
                })
                .collect();
            serde_json::to_string_pretty(&objs)?
        }
    })
}

fn cmd_stats(cli: &Cli, input: &Input, bucket_width: usize) -> Result<String> {
    let corpus = load_input(input)?;
    let dist = class_distribution(&corpus)?;
    let lengths = length_stats_with(&corpus, &Tokenizer::default(), bucket_width.max(1));
    if let Some(dir) = out_dir(cli)? {
        let mut buf = Vec::new();
        dist.write_csv(&mut buf)?;
        write_file(&dir.join("distribution.csv"), &buf)?;
        let mut buf = Vec::new();
        lengths.write_csv(&mut buf)?;
        write_file(&dir.join("lengths.csv"), &buf)?;
        write_file(
            &dir.join("lengths_hist.json"),
            serde_json::to_string_pretty(&lengths.to_plot_json())?.as_bytes(),
        )?;
    }
    let pct = dist.percentages(2);
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    let mut rows: Vec<Vec<String>> = (0..dist.labels.len())
        .map(|c| {
            vec![
                dist.labels[c].clone(),
                dist.counts[c].to_string(),
                format!("{:.2}", pct[c]),
                opt(lengths.classes[c].mean_tokens),
                opt(lengths.classes[c].mean_chars),
            ]
        })
        .collect();
    rows.push(vec!["total".into(), dist.total.to_string(), "100.00".into(), String::new(), String::new()]);
    table(&["class", "count", "percentage", "mean_tokens", "mean_chars"], &rows, cli.format)
}

fn cmd_clean(cli: &Cli, input: &Input) -> Result<String> {
    let dir = out_dir(cli)?.ok_or_else(|| Error::InvalidArgument("clean needs --out DIR".into()))?;
    let corpus = load_input(input)?;
    let result = cleanse(&corpus)?;
    export_corpus(&result.retained, dir.join("corpus.jsonl"))?;
    let mut buf = Vec::new();
    result.write_ledger_csv(&mut buf)?;
    write_file(&dir.join("ledger.csv"), &buf)?;
    write_file(&dir.join("cleanse_report.md"), result.report_markdown().as_bytes())?;
    let rows: Vec<Vec<String>> = result
        .ledger
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.input.to_string(),
                r.retained.to_string(),
                r.removed_conflicting.to_string(),
                r.removed_duplicate.to_string(),
                r.removed().to_string(),
            ]
        })
        .collect();
    table(
        &["class", "input", "retained", "removed_conflicting", "removed_duplicate", "removed_total"],
        &rows,
        cli.format,
    )
}

fn cmd_split(cli: &Cli, input: &Input, ratio: f64, k: Option<usize>, unstratified: bool) -> Result<String> {
    let corpus = load_input(input)?;
    let seed = cli.seed.unwrap_or(0);
    let assignment = match k {
        Some(k) => folds_assignment(&corpus, &kfold_with(&corpus, k, seed, !unstratified)?),
        None => {
            let s = fixed_split_indices(&corpus, ratio, seed, !unstratified)?;
            if let Some(dir) = out_dir(cli)? {
                let (train, test) = s.materialize(&corpus);
                export_corpus(&train, dir.join("train.jsonl"))?;
                export_corpus(&test, dir.join("test.jsonl"))?;
            }
            s.assignment(&corpus)
        }
    };
    let mut buf = Vec::new();
    assignment.write_csv(&mut buf)?;
    if let Some(dir) = out_dir(cli)? {
        write_file(&dir.join("assignment.csv"), &buf)?;
    }
    let mut counts: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
    for ((_, tag), inst) in assignment.rows.iter().zip(corpus.iter()) {
        counts.entry(tag.as_str()).or_insert_with(|| vec![0; corpus.scheme().len()])[inst.label] += 1;
    }
    let mut header = vec!["split"];
    header.extend(corpus.scheme().labels().iter().map(String::as_str));
    header.push("total");
    let mut tags: Vec<&str> = counts.keys().copied().collect();
    tags.sort_by_key(|t| (t.parse::<usize>().unwrap_or(usize::MAX), t.to_string()));
    let rows: Vec<Vec<String>> = tags
        .iter()
        .map(|t| {
            let c = &counts[t];
            let mut r = vec![t.to_string()];
            r.extend(c.iter().map(|n| n.to_string()));
            r.push(c.iter().sum::<usize>().to_string());
            r
        })
        .collect();
    table(&header, &rows, cli.format)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("this subcommand needs --config PATH".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let opts = RunOptions {
        out_dir: cli.out.clone(),
        workers: cli.workers.max(1),
        ..Default::default()
    };
    let result = run_experiment(&cfg, &opts)?;
    let mut text = render_report(std::slice::from_ref(&result.row), cli.format.into())?;
    if !matches!(cli.format, Format::Json) {
        text.push_str(&format!("\nrun directory: {}\n", result.run_dir.display()));
    }
    Ok(text)
}

fn read_labels(path: &Path, scheme: Option<&LabelScheme>) -> Result<Vec<(String, String)>> {
    let path = resolve(path);
    let mut r = csv::Reader::from_path(&path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 1,
            message: format!("missing `{name}` column"),
        })
    };
    let (id_col, label_col) = (col("id")?, col("label")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(label_col).unwrap_or_default().trim().to_string();
        if let Some(s) = scheme {
            if s.index_of(&label).is_none() {
                return Err(Error::UnknownLabel {
                    label,
                    task: s.task().to_string(),
                });
            }
        }
        out.push((rec.get(id_col).unwrap_or_default().to_string(), label));
    }
    Ok(out)
}

fn infer_scheme(labels: &[&str]) -> Result<LabelScheme> {
    for scheme in [LabelScheme::intent(), LabelScheme::sentiment()] {
        if labels.iter().all(|l| scheme.index_of(l).is_some()) {
            return Ok(scheme);
        }
    }
    Err(Error::InvalidArgument("labels match neither the intent nor the sentiment scheme; pass --task".into()))
}

fn render_evaluation(r: &EvaluationReport, format: Format) -> Result<String> {
    if matches!(format, Format::Json) {
        return Ok(serde_json::to_string_pretty(r)?);
    }
    let opt = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
    let mut rows: Vec<Vec<String>> = r
        .labels
        .iter()
        .enumerate()
        .map(|(c, l)| {
            vec![
                l.clone(),
                opt(r.per_class_accuracy[c]),
                format!("{:.2}", 100.0 * r.precision[c]),
                format!("{:.2}", 100.0 * r.recall[c]),
                format!("{:.2}", 100.0 * r.f1[c]),
            ]
        })
        .collect();
    rows.push(vec!["micro-F1".into(), String::new(), String::new(), String::new(), format!("{:.2}", 100.0 * r.micro_f1)]);
    rows.push(vec!["macro-F1".into(), String::new(), String::new(), String::new(), format!("{:.2}", 100.0 * r.macro_f1)]);
    table(&["class", "accuracy (%)", "precision (%)", "recall (%)", "f1 (%)"], &rows, format)
}

fn cmd_evaluate(
    cli: &Cli,
    gold: Option<&Path>,
    pred: Option<&Path>,
    model: Option<&Path>,
    input: Option<&Path>,
    task: Option<TaskArg>,
) -> Result<String> {
    let task_scheme = task.map(|t| match t {
        TaskArg::Intent => LabelScheme::for_task(Task::Intent),
        TaskArg::Sentiment => LabelScheme::for_task(Task::Sentiment),
    });
    let report = if let Some(model) = model {
        let clf = load_model(resolve(model))?;
        let corpus = load_one(&resolve(input.expect("clap requires input")), InputKind::Auto)?;
        if corpus.scheme() != clf.scheme() {
            return Err(Error::InvalidArgument("model and corpus use different label schemes".into()));
        }
        let p = predict(&clf, corpus.instances())?;
        evaluate(corpus.scheme(), &corpus.labels(), &p.labels)?
    } else {
        let (gold, pred) = match (gold, pred) {
            (Some(g), Some(p)) => (g, p),
            _ => return Err(Error::InvalidArgument("evaluate needs --gold and --pred, or --model and --input".into())),
        };
        let g = read_labels(gold, task_scheme.as_ref())?;
        let p = read_labels(pred, task_scheme.as_ref())?;
        let scheme = match task_scheme {
            Some(s) => s,
            None => {
                let all: Vec<&str> = g.iter().chain(&p).map(|(_, l)| l.as_str()).collect();
                infer_scheme(&all)?
            }
        };
        let by_id: HashMap<&str, &str> = p.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
        let mut gi = Vec::with_capacity(g.len());
        let mut pi = Vec::with_capacity(g.len());
        for (id, label) in &g {
            let pl = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("no prediction for id `{id}`")))?;
            gi.push(scheme.index_of(label).expect("checked"));
            pi.push(scheme.index_of(pl).expect("checked"));
        }
        evaluate(&scheme, &gi, &pi)?
    };
    if let Some(dir) = out_dir(cli)? {
        write_file(&dir.join("evaluation.json"), &serde_json::to_vec_pretty(&report)?)?;
        write_file(&dir.join("evaluation.csv"), report.to_csv_string()?.as_bytes())?;
    }
    render_evaluation(&report, cli.format)
}

fn cmd_fetch(cli: &Cli, url: &str, sha256: &str, name: Option<&str>) -> Result<String> {
    let name = match name {
        Some(n) => n.to_string(),
        None => url
            .rsplit('/')
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::InvalidArgument("cannot derive a file name from the URL; pass --name".into()))?
            .to_string(),
    };
    let dir = match (&cli.out, citeimpact::harness::data_root()) {
        (Some(d), _) => d.clone(),
        (None, Some(root)) => root,
        (None, None) => {
            return Err(Error::InvalidArgument(format!(
                "fetch needs --out DIR or ${DATA_DIR_ENV}"
            )))
        }
    };
    let dest = dir.join(name);
    let outcome = fetch(url, &dest, sha256)?;
    let status = match outcome {
        FetchOutcome::Verified => "verified",
        FetchOutcome::Downloaded => "downloaded",
    };
    Ok(format!(
        "{}\n",
        json!({"path": dest.display().to_string(), "sha256": sha256.to_ascii_lowercase(), "status": status})
    ))
}

fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Stats { input, bucket_width } => cmd_stats(cli, input, *bucket_width),
        Command::Clean { input } => cmd_clean(cli, input),
        Command::Split {
            input,
            ratio,
            k,
            unstratified,
        } => cmd_split(cli, input, *ratio, *k, *unstratified),
        Command::Train => {
            let cfg = load_config(cli)?;
            if matches!(cfg.split, SplitConfig::Kfold { .. }) {
                return Err(Error::InvalidArgument("config uses a kfold split; run `cv` instead".into()));
            }
            run(cli, cfg)
        }
        Command::Cv { k } => {
            let mut cfg = load_config(cli)?;
            if let Some(k) = k {
                cfg.split = SplitConfig::Kfold { k: *k, stratified: true };
            }
            if !matches!(cfg.split, SplitConfig::Kfold { .. }) {
                return Err(Error::InvalidArgument("cv needs a kfold split in the config or --k".into()));
            }
            run(cli, cfg)
        }
        Command::Evaluate {
            gold,
            pred,
            model,
            input,
            task,
        } => cmd_evaluate(cli, gold.as_deref(), pred.as_deref(), model.as_deref(), input.as_deref(), *task),
        Command::Report { runs } => {
            let rows = collect_rows(runs)?;
            let text = render_report(&rows, cli.format.into())?;
            if let Some(dir) = out_dir(cli)? {
                let ext = ReportFormat::from(cli.format).extension();
                write_file(&dir.join(format!("report.{ext}")), text.as_bytes())?;
            }
            Ok(text)
        }
        Command::Fetch { url, sha256, name } => cmd_fetch(cli, url, sha256, name.as_deref()),
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    match e {
        Error::Stage { stage, source } => {
            let mut inner = error_json(source);
            let obj = inner["error"].as_object_mut().expect("object");
            let path = match obj.get("stage").and_then(|s| s.as_str()) {
                Some(s) => format!("{stage}/{s}"),
                None => stage.clone(),
            };
            obj.insert("stage".into(), json!(path));
            inner
        }
        other => json!({"error": {"kind": other.kind(), "message": other.to_string()}}),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            eprintln!("{}", json!({"error": {"kind": "usage", "message": msg.trim()}}));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(1)
        }
    }
}
