//! Pretrained-encoder backends.
//!
//! A checkpoint id is `family:location`. The registry maps a family name
//! to a backend; families without a registered backend (for example
//! `bert`, `albert`, `xlnet` in a build without a transformer runtime)
//! fail with [`Error::BackendUnavailable`].
//!
//! The built-in `word-vectors` family reads a word2vec/GloVe text file
//! (`token v1 v2 ...` per line, optional `count dim` first line),
//! initialises the embedding table from it, and fine-tunes the vectors
//! together with a mean+max pooled classification head.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::balance::LossConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::models::classifier::Classifier;
use crate::models::config::{ModelConfig, Topology};
use crate::models::train::{train_with_init, Sampling, TrainParams, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneParams {
    pub train: TrainParams,
    pub loss: LossConfig,
    pub sampling: Sampling,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl Default for FineTuneParams {
    fn default() -> Self {
        FineTuneParams {
            train: TrainParams {
                epochs: 5,
                patience: 5,
                batch_size: 16,
                learning_rate: 1e-2,
                clip_norm: 5.0,
            },
            loss: LossConfig::default(),
            sampling: Sampling::None,
            max_seq_len: 256,
            dropout: 0.1,
        }
    }
}

pub trait EncoderBackend: Send + Sync {
    fn family(&self) -> &str;

    fn fine_tune(
        &self,
        location: &str,
        train: &Corpus,
        val: Option<&Corpus>,
        params: &FineTuneParams,
        seed: u64,
    ) -> Result<(Classifier, TrainReport)>;
}

pub fn parse_checkpoint(id: &str) -> Result<(&str, &str)> {
    id.split_once(':')
        .filter(|(f, _)| !f.is_empty())
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint `{id}` is not of the form family:location")))
}

#[derive(Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn EncoderBackend>>,
}

impl Default for BackendRegistry {
    /// Registry holding the built-in `word-vectors` backend.
    fn default() -> Self {
        let mut r = BackendRegistry::empty();
        r.register(Arc::new(WordVectorBackend));
        r
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            backends: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, backend: Arc<dyn EncoderBackend>) {
        self.backends.insert(backend.family().to_string(), backend);
    }

    pub fn families(&self) -> Vec<&str> {
        self.backends.keys().map(String::as_str).collect()
    }

    pub fn get(&self, family: &str) -> Result<&Arc<dyn EncoderBackend>> {
        self.backends.get(family).ok_or_else(|| {
            Error::BackendUnavailable(format!(
                "{family} (registered: {})",
                if self.backends.is_empty() {
                    "none".to_string()
                } else {
                    self.families().join(", ")
                }
            ))
        })
    }

    pub fn fine_tune(
        &self,
        checkpoint: &str,
        train: &Corpus,
        val: Option<&Corpus>,
        params: &FineTuneParams,
        seed: u64,
    ) -> Result<(Classifier, TrainReport)> {
        let (family, location) = parse_checkpoint(checkpoint)?;
        self.get(family)?.fine_tune(location, train, val, params, seed)
    }
}

/// Fine-tunes `checkpoint` with the default registry.
pub fn fine_tune(
    checkpoint: &str,
    train: &Corpus,
    val: Option<&Corpus>,
    params: &FineTuneParams,
    seed: u64,
) -> Result<(Classifier, TrainReport)> {
    BackendRegistry::default().fine_tune(checkpoint, train, val, params, seed)
}

pub struct WordVectorBackend;

pub const WORD_VECTORS: &str = "word-vectors";

pub fn read_word_vectors(path: &Path) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.display().to_string()),
        _ => Error::io(path, e),
    })?;
    let mut dim = None;
    let mut vectors = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("bad vector component: {e}"),
            })?;
        if n == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
            continue;
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            _ => {}
        }
        vectors.insert(token.to_lowercase(), values);
    }
    match dim {
        Some(d) if d > 0 => Ok((d, vectors)),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no vectors".into(),
        }),
    }
}

impl EncoderBackend for WordVectorBackend {
    fn family(&self) -> &str {
        WORD_VECTORS
    }

    fn fine_tune(
        &self,
        location: &str,
        train: &Corpus,
        val: Option<&Corpus>,
        params: &FineTuneParams,
        seed: u64,
    ) -> Result<(Classifier, TrainReport)> {
        let (dim, vectors) = read_word_vectors(Path::new(location))?;
        let config = ModelConfig {
            topology: Topology::Pretrained,
            layers: 1,
            units: 2 * dim,
            conv_widths: Vec::new(),
            embedding_dim: dim,
            max_seq_len: params.max_seq_len,
            dropout: params.dropout,
            seed,
            min_frequency: 1,
            pretrained_checkpoint: Some(format!("{WORD_VECTORS}:{location}")),
        };
        config.validate()?;
        params.train.validate()?;
        train_with_init(
            &config,
            train,
            val,
            &params.loss,
            &params.sampling,
            &params.train,
            |net, vocab, p| {
                let mut hits = 0;
                for (id, tok) in vocab.tokens().iter().enumerate().skip(2) {
                    if let Some(v) = vectors.get(tok) {
                        net.set_embedding_row(p, id, v);
                        hits += 1;
                    }
                }
                log::info!("word vectors cover {hits} of {} vocabulary entries", vocab.len() - 2);
                Ok(())
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Corpus {
        let inst = (0..6)
            .map(|i| crate::corpus::CitationInstance::new(i.to_string(), format!("good text {i}"), i % 3))
            .collect();
        Corpus::new("c", crate::corpus::LabelScheme::intent(), inst).unwrap()
    }

    #[test]
    fn unknown_family_is_a_capability_error() {
        let err = fine_tune("xlnet:base-cased", &corpus(), None, &FineTuneParams::default(), 0).unwrap_err();
        match err {
            Error::BackendUnavailable(m) => assert!(m.contains("xlnet")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_vector_file() {
        let err = fine_tune("word-vectors:/nonexistent/v.txt", &corpus(), None, &FineTuneParams::default(), 0).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint(_)));
    }

    #[test]
    fn reads_word2vec_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "2 3\ngood 0.1 0.2 0.3\nText 1 2 3\n").unwrap();
        let (d, v) = read_word_vectors(&p).unwrap();
        assert_eq!(d, 3);
        assert_eq!(v["text"], vec![1.0, 2.0, 3.0]);
        assert!(parse_checkpoint("nofamily").is_err());
    }
}
