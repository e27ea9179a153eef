//! Citation corpora: data model, loaders for the SciCite and citation
//! sentiment corpus formats, canonical export, and distribution/length
//! statistics.
//!
//! Labels are stored as indices into the corpus [`LabelScheme`] in memory
//! and always written by name on disk.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Tokenizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Intent,
    Sentiment,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Intent => "intent",
            Task::Sentiment => "sentiment",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intent" => Ok(Task::Intent),
            "sentiment" => Ok(Task::Sentiment),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

/// Ordered label names for a task. Report columns follow this order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    task: Task,
    labels: Vec<String>,
}

impl LabelScheme {
    pub fn new(task: Task, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("label scheme has no labels".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.trim().is_empty() {
                return Err(Error::InvalidArgument("empty label name".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelScheme { task, labels })
    }

    pub fn intent() -> Self {
        LabelScheme {
            task: Task::Intent,
            labels: vec!["result".into(), "method".into(), "background".into()],
        }
    }

    pub fn sentiment() -> Self {
        LabelScheme {
            task: Task::Sentiment,
            labels: vec!["positive".into(), "negative".into(), "neutral".into()],
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Intent => Self::intent(),
            Task::Sentiment => Self::sentiment(),
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub(crate) fn parse_label(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownLabel {
            label: name.to_string(),
            task: self.task.to_string(),
        })
    }
}

/// One labeled citation context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationInstance {
    pub id: String,
    pub text: String,
    pub label: usize,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl CitationInstance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        CitationInstance {
            id: id.into(),
            text: text.into(),
            label,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }
}

/// Ordered, validated collection of instances under one scheme.
///
/// Immutable once built; iteration order equals ingestion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    scheme: LabelScheme,
    instances: Vec<CitationInstance>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        scheme: LabelScheme,
        instances: Vec<CitationInstance>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.text.trim().is_empty() {
                return Err(Error::InvalidCorpus(format!("instance `{}` has empty text", inst.id)));
            }
            if inst.label >= scheme.len() {
                return Err(Error::InvalidCorpus(format!(
                    "instance `{}` has label index {} outside a {}-label scheme",
                    inst.id,
                    inst.label,
                    scheme.len()
                )));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::InvalidCorpus(format!("duplicate id `{}`", inst.id)));
            }
        }
        Ok(Corpus {
            name: name.into(),
            scheme,
            instances,
        })
    }

    pub fn empty(name: impl Into<String>, scheme: LabelScheme) -> Self {
        Corpus {
            name: name.into(),
            scheme,
            instances: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn instances(&self) -> &[CitationInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CitationInstance> {
        self.instances.iter()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.text.as_str()).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.scheme.len()];
        for inst in &self.instances {
            counts[inst.label] += 1;
        }
        counts
    }

    /// Indices of each class's instances, in corpus order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.scheme.len()];
        for (i, inst) in self.instances.iter().enumerate() {
            out[inst.label].push(i);
        }
        out
    }

    /// Sub-corpus of the given positions, in the order given.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Corpus {
        Corpus {
            name: name.into(),
            scheme: self.scheme.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Corpus {
        self.name = name.into();
        self
    }

    pub fn into_instances(self) -> Vec<CitationInstance> {
        self.instances
    }

    /// Builds a corpus from instances known to satisfy the invariants.
    pub(crate) fn from_parts_unchecked(
        name: String,
        scheme: LabelScheme,
        instances: Vec<CitationInstance>,
    ) -> Corpus {
        debug_assert!(Corpus::new(name.clone(), scheme.clone(), instances.clone()).is_ok());
        Corpus {
            name,
            scheme,
            instances,
        }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CitationInstance;
    type IntoIter = std::slice::Iter<'a, CitationInstance>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}

// ---------------------------------------------------------------------------
// Loaders

/// A line the loader skipped, with the reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub path: String,
    pub records: usize,
    pub skipped: Vec<SkippedLine>,
}

/// Field names of a SciCite record-per-line file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SciciteFields {
    pub text: String,
    /// Tried in order when `text` is absent from a record.
    pub text_fallbacks: Vec<String>,
    pub label: String,
    pub id: String,
    /// Extra string fields copied into instance metadata when present.
    pub meta: Vec<String>,
}

impl Default for SciciteFields {
    fn default() -> Self {
        SciciteFields {
            text: "string".into(),
            text_fallbacks: vec!["text".into()],
            label: "label".into(),
            id: "unique_id".into(),
            meta: vec![
                "citingPaperId".into(),
                "citedPaperId".into(),
                "sectionName".into(),
            ],
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn no_records(path: &Path, report: &LoadReport) -> Error {
    Error::NoRecords {
        path: path.to_path_buf(),
        skipped: report.skipped.len(),
        first_problem: report
            .skipped
            .first()
            .map(|s| format!("line {}: {}", s.line, s.reason))
            .unwrap_or_else(|| "file has no content lines".into()),
    }
}

fn unique_id(ids: &mut HashSet<String>, candidate: String, line: usize) -> String {
    if ids.insert(candidate.clone()) {
        return candidate;
    }
    let alt = format!("{candidate}~{line}");
    ids.insert(alt.clone());
    alt
}

/// Loads one SciCite split. Malformed lines are skipped and reported;
/// an unknown label string is a hard error.
pub fn load_scicite_split(
    path: impl AsRef<Path>,
    split: &str,
    fields: &SciciteFields,
) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let scheme = LabelScheme::intent();
    let mut report = LoadReport {
        path: path.display().to_string(),
        ..Default::default()
    };
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                report.skipped.push(SkippedLine {
                    line: lineno,
                    reason: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let text = value
            .get(&fields.text)
            .or_else(|| fields.text_fallbacks.iter().find_map(|k| value.get(k)))
            .and_then(|v| v.as_str());
        let label = value.get(&fields.label).and_then(|v| v.as_str());
        let (text, label) = match (text, label) {
            (Some(t), Some(l)) if !t.trim().is_empty() => (t, l),
            (Some(_), Some(_)) => {
                report.skipped.push(SkippedLine {
                    line: lineno,
                    reason: "empty text".into(),
                });
                continue;
            }
            _ => {
                report.skipped.push(SkippedLine {
                    line: lineno,
                    reason: format!("missing `{}` or `{}` field", fields.text, fields.label),
                });
                continue;
            }
        };
        let label = scheme.parse_label(label).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let raw_id = value
            .get(&fields.id)
            .and_then(|v| v.as_str().map(str::to_string).or_else(|| v.as_i64().map(|n| n.to_string())))
            .unwrap_or_else(|| format!("{split}-{lineno}"));
        let mut inst = CitationInstance::new(unique_id(&mut ids, raw_id, lineno), text, label)
            .with_meta("split", split);
        for key in &fields.meta {
            if let Some(v) = value.get(key).and_then(|v| v.as_str()) {
                inst.meta.insert(key.clone(), v.to_string());
            }
        }
        instances.push(inst);
    }
    for s in &report.skipped {
        warn!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    if instances.is_empty() {
        return Err(no_records(path, &report));
    }
    report.records = instances.len();
    let corpus = Corpus::from_parts_unchecked(format!("scicite-{split}"), scheme, instances);
    Ok((corpus, report))
}

/// The three SciCite splits with per-file load reports.
#[derive(Clone, Debug)]
pub struct SciciteSplits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    pub reports: [LoadReport; 3],
}

pub fn load_scicite_with(
    train_path: impl AsRef<Path>,
    val_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    fields: &SciciteFields,
) -> Result<SciciteSplits> {
    let (train, r0) = load_scicite_split(train_path, "train", fields)?;
    let (val, r1) = load_scicite_split(val_path, "val", fields)?;
    let (test, r2) = load_scicite_split(test_path, "test", fields)?;
    Ok(SciciteSplits {
        train,
        val,
        test,
        reports: [r0, r1, r2],
    })
}

pub fn load_scicite(
    train_path: impl AsRef<Path>,
    val_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<(Corpus, Corpus, Corpus)> {
    let s = load_scicite_with(train_path, val_path, test_path, &SciciteFields::default())?;
    Ok((s.train, s.val, s.test))
}

/// Maps a citation sentiment corpus code to the sentiment label index.
pub fn sentiment_code(code: &str) -> Option<usize> {
    match code.trim() {
        "p" => Some(0),
        "n" => Some(1),
        "o" => Some(2),
        _ => None,
    }
}

/// Loads the tab-delimited citation sentiment corpus
/// (`citing_id \t cited_id \t code \t text`; `#` lines are comments).
pub fn load_csc(path: impl AsRef<Path>) -> Result<Corpus> {
    load_csc_with_report(path).map(|(c, _)| c)
}

pub fn load_csc_with_report(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let mut raw = String::new();
    open(path)?
        .read_to_string(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    let (corpus, report) = parse_csc(&raw, &path.display().to_string());
    for s in &report.skipped {
        warn!("{}:{}: skipped: {}", path.display(), s.line, s.reason);
    }
    if corpus.is_empty() {
        return Err(no_records(path, &report));
    }
    Ok((corpus, report))
}

pub(crate) fn parse_csc(raw: &str, source: &str) -> (Corpus, LoadReport) {
    let mut report = LoadReport {
        path: source.to_string(),
        ..Default::default()
    };
    let mut instances = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 4 {
            report.skipped.push(SkippedLine {
                line: lineno,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
            continue;
        }
        let Some(label) = sentiment_code(fields[2]) else {
            report.skipped.push(SkippedLine {
                line: lineno,
                reason: format!("unknown sentiment code `{}`", fields[2].trim()),
            });
            continue;
        };
        let text = fields[3];
        if text.trim().is_empty() {
            report.skipped.push(SkippedLine {
                line: lineno,
                reason: "empty text".into(),
            });
            continue;
        }
        let inst = CitationInstance::new(format!("csc-{lineno}"), text, label)
            .with_meta("citing", fields[0].trim())
            .with_meta("cited", fields[1].trim())
            .with_meta("line", lineno.to_string());
        instances.push(inst);
    }
    report.records = instances.len();
    (
        Corpus::from_parts_unchecked("csc".into(), LabelScheme::sentiment(), instances),
        report,
    )
}

// ---------------------------------------------------------------------------
// Canonical export

pub const CORPUS_FORMAT: &str = "citeimpact-corpus";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ExportHeader {
    format: String,
    version: u32,
    name: String,
    task: Task,
    labels: Vec<String>,
    records: usize,
}

#[derive(Serialize, Deserialize)]
struct ExportRecord<'a> {
    id: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
    label: std::borrow::Cow<'a, str>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    let header = ExportHeader {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_FORMAT_VERSION,
        name: corpus.name.clone(),
        task: corpus.scheme.task(),
        labels: corpus.scheme.labels().to_vec(),
        records: corpus.len(),
    };
    let io = |e| Error::io("<corpus export>", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for inst in &corpus.instances {
        let rec = ExportRecord {
            id: inst.id.as_str().into(),
            text: inst.text.as_str().into(),
            label: corpus.scheme.name(inst.label).into(),
            meta: inst.meta.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes the canonical record-per-line export: one header line, then
/// one JSON record per instance with the label by name.
pub fn export_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus<R: BufRead>(reader: R, source: &Path) -> Result<Corpus> {
    let mut lines = reader.lines().enumerate();
    let header: ExportHeader = loop {
        match lines.next() {
            None => {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: 1,
                    message: "missing corpus header".into(),
                })
            }
            Some((_, l)) => {
                let l = l.map_err(|e| Error::io(source, e))?;
                if l.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&l).map_err(|e| Error::Parse {
                    path: source.to_path_buf(),
                    line: 1,
                    message: format!("bad corpus header: {e}"),
                })?;
            }
        }
    };
    if header.format != CORPUS_FORMAT {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 1,
            message: format!("not a {CORPUS_FORMAT} file (format `{}`)", header.format),
        });
    }
    if header.version != CORPUS_FORMAT_VERSION {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 1,
            message: format!("unsupported corpus format version {}", header.version),
        });
    }
    let scheme = LabelScheme::new(header.task, header.labels)?;
    let mut instances = Vec::with_capacity(header.records);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: ExportRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let label = scheme
            .parse_label(&rec.label)
            .map_err(|e| parse_err(e.to_string()))?;
        instances.push(CitationInstance {
            id: rec.id.into_owned(),
            text: rec.text.into_owned(),
            label,
            meta: rec.meta,
        });
    }
    Corpus::new(header.name, scheme, instances)
}

/// Reads a canonical export written by [`export_corpus`].
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    read_corpus(open(path)?, path)
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionStats {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    pub total: usize,
}

impl DistributionStats {
    /// Percentages rounded for presentation.
    pub fn percentages(&self, decimals: u32) -> Vec<f64> {
        let scale = 10f64.powi(decimals as i32);
        self.fractions
            .iter()
            .map(|f| (f * 100.0 * scale).round() / scale)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "count", "percentage"])?;
        for ((label, count), pct) in self.labels.iter().zip(&self.counts).zip(self.percentages(2)) {
            w.write_record([label.clone(), count.to_string(), format!("{pct:.2}")])?;
        }
        w.write_record(["total".to_string(), self.total.to_string(), "100.00".to_string()])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn class_distribution(corpus: &Corpus) -> Result<DistributionStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts = corpus.class_counts();
    let total = corpus.len();
    Ok(DistributionStats {
        labels: corpus.scheme().labels().to_vec(),
        fractions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        counts,
        total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassLengths {
    pub label: String,
    pub count: usize,
    /// Absent for a class with no instances.
    pub mean_tokens: Option<f64>,
    pub mean_chars: Option<f64>,
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
    /// `histogram[b]` counts instances with `b*width <= tokens < (b+1)*width`.
    pub histogram: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthStats {
    pub bucket_width: usize,
    pub classes: Vec<ClassLengths>,
}

pub const DEFAULT_BUCKET_WIDTH: usize = 10;

pub fn length_stats(corpus: &Corpus, tokenizer: &Tokenizer) -> LengthStats {
    length_stats_with(corpus, tokenizer, DEFAULT_BUCKET_WIDTH)
}

pub fn length_stats_with(corpus: &Corpus, tokenizer: &Tokenizer, bucket_width: usize) -> LengthStats {
    let bucket_width = bucket_width.max(1);
    let k = corpus.scheme().len();
    let lengths: Vec<(usize, usize, usize)> = corpus
        .iter()
        .map(|i| (i.label, tokenizer.count(&i.text), i.text.chars().count()))
        .collect();
    let buckets = lengths.iter().map(|l| l.1 / bucket_width + 1).max().unwrap_or(0);
    let mut classes: Vec<ClassLengths> = corpus
        .scheme()
        .labels()
        .iter()
        .map(|l| ClassLengths {
            label: l.clone(),
            count: 0,
            mean_tokens: None,
            mean_chars: None,
            min_tokens: None,
            max_tokens: None,
            histogram: vec![0; buckets],
        })
        .collect();
    let mut tok_sum = vec![0usize; k];
    let mut char_sum = vec![0usize; k];
    for &(label, toks, chars) in &lengths {
        let c = &mut classes[label];
        c.count += 1;
        c.histogram[toks / bucket_width] += 1;
        c.min_tokens = Some(c.min_tokens.map_or(toks, |m| m.min(toks)));
        c.max_tokens = Some(c.max_tokens.map_or(toks, |m| m.max(toks)));
        tok_sum[label] += toks;
        char_sum[label] += chars;
    }
    for (i, c) in classes.iter_mut().enumerate() {
        if c.count > 0 {
            c.mean_tokens = Some(tok_sum[i] as f64 / c.count as f64);
            c.mean_chars = Some(char_sum[i] as f64 / c.count as f64);
        }
    }
    LengthStats {
        bucket_width,
        classes,
    }
}

#[derive(Serialize)]
struct HistogramBucket {
    lo: usize,
    hi: usize,
    count: usize,
}

#[derive(Serialize)]
struct ClassHistogram {
    count: usize,
    mean_tokens: Option<f64>,
    mean_chars: Option<f64>,
    buckets: Vec<HistogramBucket>,
}

impl LengthStats {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "count", "mean_tokens", "mean_chars", "min_tokens", "max_tokens"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        let optu = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.classes {
            w.write_record([
                c.label.clone(),
                c.count.to_string(),
                opt(c.mean_tokens),
                opt(c.mean_chars),
                optu(c.min_tokens),
                optu(c.max_tokens),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Plot-ready histogram JSON: class name to bucket list.
    pub fn to_plot_json(&self) -> serde_json::Value {
        let mut classes = serde_json::Map::new();
        for c in &self.classes {
            let h = ClassHistogram {
                count: c.count,
                mean_tokens: c.mean_tokens,
                mean_chars: c.mean_chars,
                buckets: c
                    .histogram
                    .iter()
                    .enumerate()
                    .map(|(b, &count)| HistogramBucket {
                        lo: b * self.bucket_width,
                        hi: (b + 1) * self.bucket_width,
                        count,
                    })
                    .collect(),
            };
            classes.insert(c.label.clone(), serde_json::to_value(h).expect("serializable"));
        }
        serde_json::json!({
            "unit": "tokens",
            "bucket_width": self.bucket_width,
            "classes": classes,
        })
    }
}
