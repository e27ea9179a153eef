//! Python bindings.
//!
//! Configs and reports cross the boundary as plain dicts (through their
//! JSON form), corpora and classifiers as opaque objects. Every toolkit
//! error surfaces as `citeimpact.CiteImpactError` whose message starts
//! with the error kind.

use std::path::PathBuf;

use citeimpact::balance::{self, LossConfig};
use citeimpact::corpus::{self, CitationInstance, LabelScheme, Task, DEFAULT_BUCKET_WIDTH};
use citeimpact::harness::{self, ExperimentConfig, RunOptions};
use citeimpact::metrics;
use citeimpact::models::{self, Sampling, Tokenizer, TrainParams};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(citeimpact, CiteImpactError, PyException);

fn py_err(e: citeimpact::Error) -> PyErr {
    CiteImpactError::new_err(format!("{}: {e}", e.kind()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| CiteImpactError::new_err(format!("serialize: {e}")))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// Reads a dict through serde; `None` gives the type's default.
fn from_py<T: DeserializeOwned + Default>(value: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(v) = value.filter(|v| !v.is_none()) else {
        return Ok(T::default());
    };
    let s: String = v.py().import("json")?.call_method1("dumps", (v,))?.extract()?;
    serde_json::from_str(&s).map_err(|e| CiteImpactError::new_err(format!("config: {e}")))
}

fn task_of(name: &str) -> PyResult<Task> {
    name.parse().map_err(py_err)
}

fn label_indices(scheme: &LabelScheme, names: &[String]) -> PyResult<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            scheme.index_of(n).ok_or_else(|| {
                py_err(citeimpact::Error::UnknownLabel {
                    label: n.clone(),
                    task: scheme.task().to_string(),
                })
            })
        })
        .collect()
}

/// An immutable labelled corpus.
#[pyclass(name = "Corpus", module = "citeimpact", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorpus(corpus::Corpus);

#[pymethods]
impl PyCorpus {
    /// Builds a corpus from `(id, text, label)` tuples.
    #[new]
    #[pyo3(signature = (task, records, name = "corpus"))]
    fn new(task: &str, records: Vec<(String, String, String)>, name: &str) -> PyResult<Self> {
        let scheme = LabelScheme::for_task(task_of(task)?);
        let labels: Vec<String> = records.iter().map(|r| r.2.clone()).collect();
        let idx = label_indices(&scheme, &labels)?;
        let instances = records
            .into_iter()
            .zip(idx)
            .map(|((id, text, _), l)| CitationInstance::new(id, text, l))
            .collect();
        corpus::Corpus::new(name, scheme, instances).map(PyCorpus).map_err(py_err)
    }

    /// Loads an exported corpus (`.jsonl` written by `export`).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        corpus::load_corpus(path).map(PyCorpus).map_err(py_err)
    }

    /// Loads the tab-delimited citation sentiment corpus.
    #[staticmethod]
    fn load_csc(path: PathBuf) -> PyResult<Self> {
        corpus::load_csc(path).map(PyCorpus).map_err(py_err)
    }

    /// Loads SciCite train/dev/test files into three corpora.
    #[staticmethod]
    fn load_scicite(train: PathBuf, dev: PathBuf, test: PathBuf) -> PyResult<(Self, Self, Self)> {
        let (a, b, c) = corpus::load_scicite(train, dev, test).map_err(py_err)?;
        Ok((PyCorpus(a), PyCorpus(b), PyCorpus(c)))
    }

    fn export(&self, path: PathBuf) -> PyResult<()> {
        corpus::export_corpus(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.0.scheme().task().as_str()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.scheme().labels().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Corpus(name={:?}, task={}, len={})", self.0.name(), self.task(), self.0.len())
    }

    fn class_counts(&self) -> Vec<usize> {
        self.0.class_counts()
    }

    /// `(id, text, label)` tuples in ingestion order.
    fn records(&self) -> Vec<(String, String, String)> {
        let s = self.0.scheme();
        self.0
            .iter()
            .map(|i| (i.id.clone(), i.text.clone(), s.name(i.label).to_string()))
            .collect()
    }

    #[pyo3(signature = (indices, name = None))]
    fn select(&self, indices: Vec<usize>, name: Option<String>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.0.len()) {
            return Err(py_err(citeimpact::Error::InvalidArgument(format!(
                "index {bad} out of range for {} instances",
                self.0.len()
            ))));
        }
        let name = name.unwrap_or_else(|| self.0.name().to_string());
        Ok(PyCorpus(self.0.select(name, &indices)))
    }

    fn distribution(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &corpus::class_distribution(&self.0).map_err(py_err)?)
    }

    #[pyo3(signature = (bucket_width = DEFAULT_BUCKET_WIDTH))]
    fn length_stats(&self, py: Python<'_>, bucket_width: usize) -> PyResult<Py<PyAny>> {
        to_py(py, &corpus::length_stats_with(&self.0, &Tokenizer::default(), bucket_width))
    }
}

/// Removes conflicting-label groups, then duplicate copies.
///
/// Returns the retained corpus and the per-class ledger.
#[pyfunction]
fn cleanse(py: Python<'_>, corpus: &PyCorpus) -> PyResult<(PyCorpus, Py<PyAny>)> {
    let r = citeimpact::cleanse::cleanse(&corpus.0).map_err(py_err)?;
    let ledger = to_py(py, &r.ledger)?;
    Ok((PyCorpus(r.retained), ledger))
}

/// `(train, test)` index lists of a seeded fixed-ratio split.
#[pyfunction]
#[pyo3(signature = (corpus, ratio, seed, stratified = true))]
fn fixed_split(corpus: &PyCorpus, ratio: f64, seed: u64, stratified: bool) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let s = citeimpact::splits::fixed_split_indices(&corpus.0, ratio, seed, stratified).map_err(py_err)?;
    Ok((s.train, s.test))
}

/// One `(train, test)` index pair per fold.
#[pyfunction]
#[pyo3(signature = (corpus, k, seed, stratified = true))]
fn kfold(corpus: &PyCorpus, k: usize, seed: u64, stratified: bool) -> PyResult<Vec<(Vec<usize>, Vec<usize>)>> {
    let folds = citeimpact::splits::kfold_with(&corpus.0, k, seed, stratified).map_err(py_err)?;
    Ok(folds.into_iter().map(|f| (f.train, f.test)).collect())
}

#[pyfunction]
fn downsample(corpus: &PyCorpus, seed: u64) -> PyCorpus {
    PyCorpus(citeimpact::splits::balance_downsample(&corpus.0, seed))
}

#[pyfunction]
fn upsample(corpus: &PyCorpus, seed: u64) -> PyCorpus {
    PyCorpus(balance::random_upsample(&corpus.0, seed))
}

#[pyfunction]
fn class_weights(corpus: &PyCorpus) -> PyResult<Vec<f64>> {
    balance::class_weights_from(&corpus.0).map_err(py_err)
}

/// Mean focal loss over a batch of probability rows.
#[pyfunction]
#[pyo3(signature = (probs, gold, gamma, class_weights = Vec::new()))]
fn focal_loss(probs: Vec<Vec<f64>>, gold: Vec<usize>, gamma: f64, class_weights: Vec<f64>) -> PyResult<f64> {
    balance::focal_loss(&probs, &gold, gamma, &class_weights).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (probs, gold, class_weights = Vec::new()))]
fn cross_entropy(probs: Vec<Vec<f64>>, gold: Vec<usize>, class_weights: Vec<f64>) -> PyResult<f64> {
    balance::cross_entropy(&probs, &gold, &class_weights).map_err(py_err)
}

/// Scores predicted label names against gold label names.
#[pyfunction]
fn evaluate(py: Python<'_>, task: &str, gold: Vec<String>, pred: Vec<String>) -> PyResult<Py<PyAny>> {
    let scheme = LabelScheme::for_task(task_of(task)?);
    let g = label_indices(&scheme, &gold)?;
    let p = label_indices(&scheme, &pred)?;
    to_py(py, &metrics::evaluate(&scheme, &g, &p).map_err(py_err)?)
}

/// A trained (or loaded) classifier.
#[pyclass(name = "Classifier", module = "citeimpact", frozen)]
struct PyClassifier(models::Classifier);

#[pymethods]
impl PyClassifier {
    /// Trains a model; `model`, `training`, `loss` and `sampling` are dicts
    /// in the experiment-config shape, defaults where omitted.
    ///
    /// Returns the classifier and its training report.
    #[staticmethod]
    #[pyo3(signature = (corpus, model = None, training = None, loss = None, sampling = None, validation = None))]
    fn train(
        py: Python<'_>,
        corpus: &PyCorpus,
        model: Option<&Bound<'_, PyAny>>,
        training: Option<&Bound<'_, PyAny>>,
        loss: Option<&Bound<'_, PyAny>>,
        sampling: Option<&Bound<'_, PyAny>>,
        validation: Option<&PyCorpus>,
    ) -> PyResult<(Self, Py<PyAny>)> {
        let config: models::ModelConfig = from_py(model)?;
        let params: TrainParams = from_py(training)?;
        let loss: LossConfig = from_py(loss)?;
        let sampling: Sampling = from_py(sampling)?;
        let val = validation.map(|v| v.0.clone());
        let train_corpus = corpus.0.clone();
        let (clf, report) = py
            .detach(|| models::train(&config, &train_corpus, val.as_ref(), &loss, &sampling, &params))
            .map_err(py_err)?;
        Ok((PyClassifier(clf), to_py(py, &report)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        models::load_model(path).map(PyClassifier).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        models::save_model(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.scheme().labels().to_vec()
    }

    #[getter]
    fn architecture(&self) -> Option<String> {
        self.0.config().map(|c| c.architecture())
    }

    /// Label names and per-class probabilities for raw texts.
    fn predict(&self, py: Python<'_>, texts: Vec<String>) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let p = py.detach(|| self.0.predict_texts(&refs)).map_err(py_err)?;
        let s = self.0.scheme();
        Ok((p.labels.iter().map(|&l| s.name(l).to_string()).collect(), p.probabilities))
    }

    /// Evaluation report of this classifier on a labelled corpus.
    fn evaluate(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<Py<PyAny>> {
        let p = py.detach(|| models::predict(&self.0, corpus.0.instances())).map_err(py_err)?;
        to_py(py, &metrics::evaluate(corpus.0.scheme(), &corpus.0.labels(), &p.labels).map_err(py_err)?)
    }
}

/// Runs a full experiment from a TOML config file or a config dict.
///
/// Returns a dict with `run_dir`, `evaluation`, `cv` (k-fold only) and
/// `row` (the report table line).
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, workers = 1))]
fn run_experiment(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    out_dir: Option<PathBuf>,
    workers: usize,
) -> PyResult<Py<PyAny>> {
    let cfg: ExperimentConfig = if config.is_instance_of::<PyDict>() {
        let s: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
        serde_json::from_str(&s).map_err(|e| py_err(citeimpact::Error::Config(e.to_string())))?
    } else {
        ExperimentConfig::load(config.extract::<PathBuf>()?).map_err(py_err)?
    };
    let opts = RunOptions {
        out_dir,
        workers,
        ..Default::default()
    };
    let r = py.detach(|| harness::run_experiment(&cfg, &opts)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("run_dir", r.run_dir)?;
    out.set_item("run_id", cfg.run_id())?;
    out.set_item("evaluation", to_py(py, &r.evaluation)?)?;
    out.set_item("cv", match &r.cv {
        Some(cv) => to_py(py, cv)?,
        None => py.None(),
    })?;
    out.set_item("row", to_py(py, &r.row)?)?;
    Ok(out.into_any().unbind())
}

#[pymodule]
#[pyo3(name = "citeimpact")]
pub fn citeimpact_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CiteImpactError", m.py().get_type::<CiteImpactError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(cleanse, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_split, m)?)?;
    m.add_function(wrap_pyfunction!(kfold, m)?)?;
    m.add_function(wrap_pyfunction!(downsample, m)?)?;
    m.add_function(wrap_pyfunction!(upsample, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
