//! Baseline text classifiers (CNN, LSTM, RNN) trained from scratch and a
//! pluggable pretrained-encoder path, all behind one [`Classifier`].

mod classifier;
mod config;
mod network;
mod persist;
pub mod pretrained;
mod tokenize;
mod train;
mod vocab;

pub use classifier::{predict, Classifier, ExternalModel, Predictions};
pub use config::{baseline_grid, ModelConfig, Topology};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_SCHEMA_VERSION};
pub use pretrained::{fine_tune, BackendRegistry, EncoderBackend, FineTuneParams};
pub use tokenize::Tokenizer;
pub use train::{argmax, gradient_check, train, GradientCheck, Sampling, TrainParams, TrainReport};
pub use vocab::{build_vocab, encode, encode_unpadded, Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};
