use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Cnn,
    Lstm,
    Rnn,
    Pretrained,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Cnn => "cnn",
            Topology::Lstm => "lstm",
            Topology::Rnn => "rnn",
            Topology::Pretrained => "pretrained",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Topology::Cnn => "CNN",
            Topology::Lstm => "LSTM",
            Topology::Rnn => "RNN",
            Topology::Pretrained => "Pretrained",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Topology::Cnn),
            "lstm" => Ok(Topology::Lstm),
            "rnn" => Ok(Topology::Rnn),
            "pretrained" => Ok(Topology::Pretrained),
            other => Err(Error::InvalidArgument(format!("unknown topology `{other}`"))),
        }
    }
}

/// Classifier architecture.
///
/// CNN: `layers` parallel convolution branches, one per entry of
/// `conv_widths`, each with `units` filters, max-pooled over time and
/// concatenated. LSTM/RNN: `layers` stacked left-to-right recurrent layers
/// of `units` cells, classified from the final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub topology: Topology,
    pub layers: usize,
    pub units: usize,
    pub conv_widths: Vec<usize>,
    pub embedding_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub seed: u64,
    pub min_frequency: usize,
    /// `family:location`, e.g. `word-vectors:/data/vectors.txt`.
    pub pretrained_checkpoint: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            topology: Topology::Cnn,
            layers: 3,
            units: 100,
            conv_widths: vec![3, 4, 5],
            embedding_dim: 64,
            max_seq_len: 256,
            dropout: 0.5,
            seed: 0,
            min_frequency: 1,
            pretrained_checkpoint: None,
        }
    }
}

impl ModelConfig {
    pub fn cnn(widths: &[usize], filters: usize) -> Self {
        ModelConfig {
            topology: Topology::Cnn,
            layers: widths.len(),
            units: filters,
            conv_widths: widths.to_vec(),
            ..Default::default()
        }
    }

    pub fn recurrent(topology: Topology, layers: usize, units: usize) -> Self {
        ModelConfig {
            topology,
            layers,
            units,
            conv_widths: Vec::new(),
            ..Default::default()
        }
    }

    /// Parses an architecture string such as `L 3 F 100 C 3,4,5` or `L 2 F 512`.
    pub fn parse_architecture(topology: Topology, spec: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("architecture `{spec}`: {msg}"));
        let mut layers = None;
        let mut units = None;
        let mut widths = Vec::new();
        let mut parts = spec.split_whitespace();
        while let Some(key) = parts.next() {
            let value = parts.next().ok_or_else(|| bad("missing value"))?;
            match key.to_ascii_uppercase().as_str() {
                "L" => layers = Some(value.parse::<usize>().map_err(|_| bad("bad L"))?),
                "F" => units = Some(value.parse::<usize>().map_err(|_| bad("bad F"))?),
                "C" => {
                    widths = value
                        .split(',')
                        .map(|w| w.trim().parse::<usize>().map_err(|_| bad("bad C")))
                        .collect::<Result<_>>()?
                }
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        let cfg = ModelConfig {
            topology,
            layers: layers.ok_or_else(|| bad("missing L"))?,
            units: units.ok_or_else(|| bad("missing F"))?,
            conv_widths: widths,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inverse of [`ModelConfig::parse_architecture`].
    pub fn architecture(&self) -> String {
        match self.topology {
            Topology::Cnn => format!(
                "L {} F {} C {}",
                self.layers,
                self.units,
                self.conv_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
            ),
            Topology::Lstm | Topology::Rnn => format!("L {} F {}", self.layers, self.units),
            Topology::Pretrained => self
                .pretrained_checkpoint
                .clone()
                .unwrap_or_else(|| "pretrained".into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be >= 1".into());
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        match self.topology {
            Topology::Pretrained => {
                if self.pretrained_checkpoint.is_none() {
                    return bad("pretrained topology needs a checkpoint".into());
                }
            }
            t => {
                if self.layers == 0 || self.units == 0 {
                    return bad("layers and units must be >= 1".into());
                }
                if t == Topology::Cnn {
                    if self.conv_widths.len() != self.layers {
                        return bad(format!(
                            "CNN needs one convolution width per layer: L={} but C has {} entries",
                            self.layers,
                            self.conv_widths.len()
                        ));
                    }
                    if self.conv_widths.contains(&0) {
                        return bad("convolution widths must be >= 1".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// The baseline grid: five CNN width sets, three LSTMs and one RNN.
pub fn baseline_grid() -> Vec<ModelConfig> {
    let specs = [
        (Topology::Cnn, "L 3 F 100 C 3,4,5"),
        (Topology::Cnn, "L 3 F 100 C 2,4,6"),
        (Topology::Cnn, "L 3 F 100 C 3,3,3"),
        (Topology::Cnn, "L 3 F 100 C 3,5,7"),
        (Topology::Cnn, "L 3 F 100 C 3,7,9"),
        (Topology::Lstm, "L 2 F 512"),
        (Topology::Lstm, "L 4 F 512"),
        (Topology::Lstm, "L 4 F 1024"),
        (Topology::Rnn, "L 2 F 512"),
    ];
    specs
        .iter()
        .map(|(t, s)| ModelConfig::parse_architecture(*t, s).expect("grid entries are valid"))
        .collect()
}
