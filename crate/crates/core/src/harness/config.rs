use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SciciteFields, Task};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, Topology, TrainParams};

/// Environment variable naming the dataset root. Relative dataset paths
/// in a config are resolved against it (or the working directory).
pub const DATA_DIR_ENV: &str = "CITEIMPACT_DATA_DIR";

pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn resolve_data_path(path: &str) -> PathBuf {
    let p = Path::new(path);
    match data_root() {
        Some(root) if p.is_relative() => root.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Three record-per-line JSON files (`train`, `val`, `test`).
    Scicite,
    /// Tab-delimited citation sentiment corpus (`path`).
    Csc,
    /// Canonical corpus export (`path`).
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub train: Option<String>,
    #[serde(default)]
    pub val: Option<String>,
    #[serde(default)]
    pub test: Option<String>,
    #[serde(default)]
    pub fields: SciciteFields,
    /// Expected sha256 per dataset path (as written in this config).
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

impl DatasetConfig {
    /// Dataset paths in config order, as written.
    pub fn paths(&self) -> Vec<&str> {
        match self.format {
            DatasetFormat::Scicite => [&self.train, &self.val, &self.test]
                .into_iter()
                .filter_map(|p| p.as_deref())
                .collect(),
            _ => self.path.as_deref().into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitConfig {
    /// Use the dataset's own train/test files (SciCite).
    Provided,
    FixedRatio {
        ratio: f64,
        #[serde(default = "yes")]
        stratified: bool,
    },
    Kfold {
        k: usize,
        #[serde(default = "yes")]
        stratified: bool,
    },
}

fn yes() -> bool {
    true
}

/// Where early-stopping data comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidationMode {
    /// The dataset's validation file when it has one, else a stratified
    /// 10% holdout of each training split.
    #[default]
    Auto,
    Provided,
    Holdout {
        fraction: f64,
    },
    /// Monitor the training split itself.
    None,
}

pub const DEFAULT_HOLDOUT: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    Focal,
    Smote,
    Upsample,
    ClassWeights,
    DownsampleBalanced,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Focal => "focal",
            Strategy::Smote => "smote",
            Strategy::Upsample => "upsample",
            Strategy::ClassWeights => "class_weights",
            Strategy::DownsampleBalanced => "downsample_balanced",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSettings {
    pub focal_gamma: f64,
    /// Use inverse-frequency class weights as the focal alpha.
    pub focal_alpha: bool,
    pub smote_k: usize,
}

impl Default for BalanceSettings {
    fn default() -> Self {
        BalanceSettings {
            focal_gamma: 2.0,
            focal_alpha: true,
            smote_k: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub task: Task,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub cleanse: bool,
    pub split: SplitConfig,
    #[serde(default)]
    pub validation: ValidationMode,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub balance: BalanceSettings,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "yes")]
    pub save_models: bool,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&raw).map_err(|e| Error::Config(e.to_string()))?,
            _ => toml::from_str(&raw).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let ds = &self.dataset;
        match ds.format {
            DatasetFormat::Scicite => {
                if self.task != Task::Intent {
                    return bad("scicite datasets carry the intent scheme; set task = \"intent\"".into());
                }
                if ds.train.is_none() || ds.test.is_none() {
                    return bad("scicite dataset needs `train` and `test` paths".into());
                }
            }
            DatasetFormat::Csc => {
                if self.task != Task::Sentiment {
                    return bad("csc datasets carry the sentiment scheme; set task = \"sentiment\"".into());
                }
                if ds.path.is_none() {
                    return bad("csc dataset needs `path`".into());
                }
            }
            DatasetFormat::Corpus => {
                if ds.path.is_none() {
                    return bad("corpus dataset needs `path`".into());
                }
            }
        }
        match &self.split {
            SplitConfig::Provided if ds.format != DatasetFormat::Scicite => {
                return bad("split kind `provided` needs a scicite dataset".into())
            }
            SplitConfig::FixedRatio { ratio, .. } if !(*ratio > 0.0 && *ratio < 1.0) => {
                return bad(format!("split ratio must lie in (0, 1), got {ratio}"))
            }
            SplitConfig::Kfold { k, .. } if *k < 2 => return bad(format!("k-fold needs k >= 2, got {k}")),
            _ => {}
        }
        if self.strategy == Strategy::DownsampleBalanced && !matches!(self.split, SplitConfig::Kfold { .. }) {
            return bad("strategy `downsample_balanced` is only valid with a kfold split".into());
        }
        match &self.validation {
            ValidationMode::Provided if ds.val.is_none() => {
                return bad("validation `provided` needs a dataset `val` path".into())
            }
            ValidationMode::Holdout { fraction } if !(*fraction > 0.0 && *fraction < 1.0) => {
                return bad(format!("holdout fraction must lie in (0, 1), got {fraction}"))
            }
            _ => {}
        }
        if self.balance.smote_k == 0 {
            return bad("balance.smote_k must be >= 1".into());
        }
        if !(self.balance.focal_gamma >= 0.0) {
            return bad("balance.focal_gamma must be >= 0".into());
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.model.topology == Topology::Pretrained && self.model.pretrained_checkpoint.is_none() {
            return bad("pretrained model needs `pretrained_checkpoint`".into());
        }
        self.training.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON text: every field present (defaults filled in),
    /// fixed key order, no insignificant whitespace.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// `<name>-<first 12 hex digits of the hash>`.
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..12])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        task = "sentiment"
        split = { kind = "kfold", k = 10 }
        strategy = "downsample_balanced"
        [dataset]
        format = "csc"
        path = "csc.txt"
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.model.architecture(), "L 3 F 100 C 3,4,5");
        assert_eq!(c.training.patience, 5);
        assert_eq!(c.validation, ValidationMode::Auto);
        assert!(c.canonical().contains("\"stratified\":true"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml_str(&format!("seed = 0\n{MINIMAL}")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml_str(&format!("seed = 1\n{MINIMAL}")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.run_id().len(), "experiment-".len() + 12);
    }

    #[test]
    fn downsampling_requires_kfold() {
        let s = MINIMAL.replace(r#"{ kind = "kfold", k = 10 }"#, r#"{ kind = "fixed_ratio", ratio = 0.7 }"#);
        assert!(matches!(ExperimentConfig::from_toml_str(&s), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str(&format!("bogus = 1\n{MINIMAL}")).is_err());
    }

    #[test]
    fn task_must_match_dataset() {
        let s = MINIMAL.replace("\"sentiment\"", "\"intent\"");
        assert!(ExperimentConfig::from_toml_str(&s).is_err());
    }
}
