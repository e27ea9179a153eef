//! Citation impact analysis toolkit: corpus ingestion and cleansing,
//! seeded splits, class-imbalance handling, baseline and pretrained
//! classifiers, evaluation metrics and an experiment harness.

pub mod balance;
pub mod cleanse;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod splits;

pub use corpus::{CitationInstance, Corpus, LabelScheme, Task};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, CvReport, EvaluationReport};
pub use models::{Classifier, ModelConfig, Topology};
