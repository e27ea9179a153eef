use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::{CitationInstance, LabelScheme};
use crate::error::{Error, Result};
use crate::models::config::ModelConfig;
use crate::models::network::Network;
use crate::models::train::argmax;
use crate::models::vocab::{encode_unpadded, Vocabulary};
use crate::models::Tokenizer;

/// A model served by an out-of-crate backend. It must be deterministic.
pub trait ExternalModel: Send + Sync {
    fn name(&self) -> &str;
    fn scheme(&self) -> &LabelScheme;
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

pub(crate) struct NativeModel {
    pub config: ModelConfig,
    pub scheme: LabelScheme,
    pub vocab: Vocabulary,
    pub params: Option<Vec<f64>>,
    pub net: Network,
}

enum Kind {
    Native(NativeModel),
    External(Arc<dyn ExternalModel>),
}

/// A trained classifier. Immutable; safe to share across threads.
pub struct Classifier {
    kind: Kind,
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Native(m) => f
                .debug_struct("Classifier")
                .field("topology", &m.config.topology)
                .field("architecture", &m.config.architecture())
                .field("vocab", &m.vocab.len())
                .field("trained", &m.params.is_some())
                .finish(),
            Kind::External(m) => f.debug_struct("Classifier").field("external", &m.name()).finish(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub probabilities: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Classifier {
    pub(crate) fn native(config: ModelConfig, scheme: LabelScheme, vocab: Vocabulary, params: Vec<f64>) -> Result<Self> {
        let net = Network::new(&config, vocab.len(), scheme.len());
        if params.len() != net.num_params() {
            return Err(Error::Integrity(format!(
                "expected {} parameters, found {}",
                net.num_params(),
                params.len()
            )));
        }
        Ok(Classifier {
            kind: Kind::Native(NativeModel {
                config,
                scheme,
                vocab,
                params: Some(params),
                net,
            }),
        })
    }

    /// A classifier shell with no weights; `predict` fails on it.
    pub fn untrained(config: ModelConfig, scheme: LabelScheme, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let net = Network::new(&config, vocab.len(), scheme.len());
        Ok(Classifier {
            kind: Kind::Native(NativeModel {
                config,
                scheme,
                vocab,
                params: None,
                net,
            }),
        })
    }

    pub fn external(model: Arc<dyn ExternalModel>) -> Self {
        Classifier {
            kind: Kind::External(model),
        }
    }

    pub fn scheme(&self) -> &LabelScheme {
        match &self.kind {
            Kind::Native(m) => &m.scheme,
            Kind::External(m) => m.scheme(),
        }
    }

    pub fn config(&self) -> Option<&ModelConfig> {
        match &self.kind {
            Kind::Native(m) => Some(&m.config),
            Kind::External(_) => None,
        }
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.kind {
            Kind::Native(m) => Some(&m.vocab),
            Kind::External(_) => None,
        }
    }

    pub fn is_trained(&self) -> bool {
        match &self.kind {
            Kind::Native(m) => m.params.is_some(),
            Kind::External(_) => true,
        }
    }

    pub fn num_params(&self) -> Option<usize> {
        match &self.kind {
            Kind::Native(m) => Some(m.net.num_params()),
            Kind::External(_) => None,
        }
    }

    pub(crate) fn native_parts(&self) -> Option<&NativeModel> {
        match &self.kind {
            Kind::Native(m) => Some(m),
            Kind::External(_) => None,
        }
    }

    pub fn predict_texts(&self, texts: &[&str]) -> Result<Predictions> {
        let probabilities: Vec<Vec<f64>> = match &self.kind {
            Kind::Native(m) => {
                let p = m.params.as_deref().ok_or(Error::Untrained)?;
                let tk = Tokenizer::default();
                texts
                    .par_iter()
                    .map(|t| {
                        let ids = encode_unpadded(t, &m.vocab, m.config.max_seq_len, &tk);
                        m.net.forward(p, &m.net.embed(p, &ids), None).probs
                    })
                    .collect()
            }
            Kind::External(m) => {
                let rows = m.predict_proba(texts)?;
                if rows.len() != texts.len() {
                    return Err(Error::InvalidArgument(format!(
                        "backend `{}` returned {} rows for {} inputs",
                        m.name(),
                        rows.len(),
                        texts.len()
                    )));
                }
                rows
            }
        };
        if probabilities.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Integrity("non-finite probability output".into()));
        }
        let labels = probabilities.iter().map(|r| argmax(r)).collect();
        Ok(Predictions { probabilities, labels })
    }
}

/// Probability vectors and argmax labels (ties to the lower class index).
pub fn predict(classifier: &Classifier, instances: &[CitationInstance]) -> Result<Predictions> {
    let texts: Vec<&str> = instances.iter().map(|i| i.text.as_str()).collect();
    classifier.predict_texts(&texts)
}
