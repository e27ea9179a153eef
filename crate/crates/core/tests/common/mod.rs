//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use citeimpact::corpus::{export_corpus, CitationInstance, Corpus, LabelScheme};
use citeimpact::harness::{DatasetConfig, DatasetFormat, ExperimentConfig, SplitConfig, Strategy, ValidationMode};
use citeimpact::models::{ModelConfig, TrainParams};
use citeimpact::Task;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FILLER: [&str; 12] = [
    "the", "model", "data", "we", "in", "results", "paper", "of", "approach", "task", "on", "work",
];

/// One cue word per class; every sentence carries exactly one.
pub const INTENT_KEYS: [&str; 3] = ["improves", "employs", "reviews"];
pub const SENTIMENT_KEYS: [&str; 3] = ["excellent", "flawed", "describes"];

/// `n_per_class[c]` sentences of six filler words plus the class cue at a
/// random position.
pub fn keyword_corpus(scheme: LabelScheme, n_per_class: &[usize], seed: u64) -> Corpus {
    let keys = match scheme.task() {
        Task::Intent => INTENT_KEYS,
        Task::Sentiment => SENTIMENT_KEYS,
    };
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, &n) in n_per_class.iter().enumerate() {
        for i in 0..n {
            let mut words: Vec<&str> = (0..6).map(|_| FILLER[r.gen_range(0..FILLER.len())]).collect();
            words.insert(r.gen_range(0..=words.len()), keys[c]);
            out.push(CitationInstance::new(format!("{c}-{i}"), words.join(" "), c));
        }
    }
    Corpus::new("keywords", scheme, out).unwrap()
}

/// Corpus with the given class counts and unique texts.
pub fn counts_corpus(scheme: LabelScheme, counts: &[usize]) -> Corpus {
    let mut out = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            out.push(CitationInstance::new(format!("{c}-{i}"), format!("text {c} {i}"), c));
        }
    }
    Corpus::new("counts", scheme, out).unwrap()
}

/// Small CNN that trains in well under a second per fold.
pub fn small_cnn() -> ModelConfig {
    let mut m = ModelConfig::cnn(&[2, 3], 8);
    m.embedding_dim = 8;
    m.dropout = 0.0;
    m
}

pub fn quick_training(epochs: usize) -> TrainParams {
    TrainParams {
        epochs,
        learning_rate: 1e-2,
        ..TrainParams::default()
    }
}

/// Writes `corpus` as a canonical export and returns an experiment over it.
pub fn experiment(dir: &Path, corpus: &Corpus, split: SplitConfig) -> ExperimentConfig {
    let path = dir.join(format!("{}.jsonl", corpus.name()));
    export_corpus(corpus, &path).unwrap();
    ExperimentConfig {
        name: "synthetic".into(),
        task: corpus.scheme().task(),
        dataset: DatasetConfig {
            format: DatasetFormat::Corpus,
            path: Some(path.to_string_lossy().into_owned()),
            train: None,
            val: None,
            test: None,
            fields: Default::default(),
            checksums: Default::default(),
        },
        cleanse: false,
        split,
        validation: ValidationMode::Auto,
        strategy: Strategy::None,
        balance: Default::default(),
        model: small_cnn(),
        training: quick_training(4),
        seed: 11,
        output_dir: None,
        save_models: true,
    }
}

/// Expected per-class ledger of a planted corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Plant {
    pub input: [usize; 3],
    pub conflicting: [usize; 3],
    pub duplicate: [usize; 3],
}

impl Plant {
    pub fn retained(&self) -> [usize; 3] {
        std::array::from_fn(|c| self.input[c] - self.conflicting[c] - self.duplicate[c])
    }
}

fn whitespace_variant(r: &mut ChaCha8Rng, base: &str) -> String {
    match r.gen_range(0..4) {
        0 => base.to_string(),
        1 => format!("  {base}"),
        2 => format!("{base}\t"),
        _ => base.replacen(' ', "   ", 1),
    }
}

/// Corpus made of text groups of three kinds: singletons, same-label
/// duplicate groups and groups with at least two distinct labels. Copies
/// differ only in whitespace. Instance order is shuffled.
pub fn planted_corpus(seed: u64, groups: usize) -> (Corpus, Plant) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut plant = Plant::default();
    let mut out = Vec::new();
    for g in 0..groups {
        let base = format!("sentence {g} cites prior work {}", r.gen_range(0..1000));
        let labels: Vec<usize> = match r.gen_range(0..3) {
            0 => vec![r.gen_range(0..3)],
            1 => vec![r.gen_range(0..3); r.gen_range(2..5)],
            _ => {
                let a = r.gen_range(0..3);
                let b = (a + r.gen_range(1..3)) % 3;
                let mut l = vec![a, b];
                for _ in 0..r.gen_range(0..3) {
                    l.push(r.gen_range(0..3));
                }
                l
            }
        };
        let conflict = labels.iter().any(|&l| l != labels[0]);
        for (j, &l) in labels.iter().enumerate() {
            plant.input[l] += 1;
            if conflict {
                plant.conflicting[l] += 1;
            } else if j > 0 {
                plant.duplicate[l] += 1;
            }
            out.push(CitationInstance::new(format!("g{g}-{j}"), whitespace_variant(&mut r, &base), l));
        }
    }
    for i in (1..out.len()).rev() {
        out.swap(i, r.gen_range(0..=i));
    }
    (Corpus::new("planted", LabelScheme::sentiment(), out).unwrap(), plant)
}

/// Brute-force per-class (tp, fp, fn) by scanning the pairs.
pub fn oracle_counts(gold: &[usize], pred: &[usize], c: usize) -> (f64, f64, f64) {
    let mut t = (0.0, 0.0, 0.0);
    for (&g, &p) in gold.iter().zip(pred) {
        if g == c && p == c {
            t.0 += 1.0;
        } else if p == c {
            t.1 += 1.0;
        } else if g == c {
            t.2 += 1.0;
        }
    }
    t
}

/// Oracle (per-class accuracy, micro-F1, macro-F1) from the textbook
/// definitions. F1 of a class with no gold and no predicted members is 0.
pub fn oracle_metrics(gold: &[usize], pred: &[usize], k: usize) -> (Vec<Option<f64>>, f64, f64) {
    let mut acc = Vec::new();
    let mut f1s = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let (tp, fp, fn_) = oracle_counts(gold, pred, c);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        acc.push(if tp + fn_ > 0.0 { Some(tp / (tp + fn_)) } else { None });
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f1s.push(if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 });
    }
    let p = tp_all / (tp_all + fp_all);
    let rc = tp_all / (tp_all + fn_all);
    let micro = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
    (acc, micro, f1s.iter().sum::<f64>() / k as f64)
}

/// Raw CSC-format text whose cleansing removes exactly (101, 27, 628):
/// conflicting pairs take (25, 15, 30) and repeated copies (76, 12, 598),
/// leaving (728, 253, 6999) of the (829, 280, 7627) input lines.
pub fn csc_shaped_text(seed: u64) -> String {
    const CODES: [&str; 3] = ["p", "n", "o"];
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<(usize, String)> = Vec::new();
    let mut unique = 0usize;
    let mut fresh = |r: &mut ChaCha8Rng| {
        unique += 1;
        let w: Vec<&str> = (0..5).map(|_| FILLER[r.gen_range(0..FILLER.len())]).collect();
        format!("Citation {unique} {}", w.join(" "))
    };
    for (a, b, n) in [(0, 2, 20), (1, 2, 10), (0, 1, 5)] {
        for _ in 0..n {
            let t = fresh(&mut r);
            lines.push((a, t.clone()));
            lines.push((b, format!(" {t}  ")));
        }
    }
    for (c, (retained, extra)) in [(728, 76), (253, 12), (6999, 598)].into_iter().enumerate() {
        let texts: Vec<String> = (0..retained).map(|_| fresh(&mut r)).collect();
        for t in &texts {
            lines.push((c, t.clone()));
        }
        for _ in 0..extra {
            let t = &texts[r.gen_range(0..texts.len())];
            lines.push((c, t.replace(' ', "  ")));
        }
    }
    for i in (1..lines.len()).rev() {
        lines.swap(i, r.gen_range(0..=i));
    }
    let mut out = String::from("# synthetic citation sentiment corpus\n");
    for (i, (c, t)) in lines.iter().enumerate() {
        out.push_str(&format!("A{:04}\tB{:04}\t{}\t{}\n", i % 977, i % 313, CODES[*c], t));
    }
    out
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` in SciCite's record
/// format with the given per-split (result, method, background) counts.
pub fn write_scicite(dir: &Path, counts: [[usize; 3]; 3], seed: u64) -> [std::path::PathBuf; 3] {
    const LABELS: [&str; 3] = ["result", "method", "background"];
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut n = 0;
    let paths = ["train", "dev", "test"].map(|s| dir.join(format!("{s}.jsonl")));
    for (split, path) in paths.iter().enumerate() {
        let mut lines = Vec::new();
        for (c, &k) in counts[split].iter().enumerate() {
            for _ in 0..k {
                n += 1;
                let mut words: Vec<&str> = (0..8).map(|_| FILLER[r.gen_range(0..FILLER.len())]).collect();
                words.insert(r.gen_range(0..=words.len()), INTENT_KEYS[c]);
                lines.push(serde_json::json!({
                    "string": words.join(" "),
                    "label": LABELS[c],
                    "unique_id": format!("s{n}"),
                    "sectionName": "Introduction",
                }).to_string());
            }
        }
        for i in (1..lines.len()).rev() {
            lines.swap(i, r.gen_range(0..=i));
        }
        std::fs::write(path, lines.join("\n") + "\n").unwrap();
    }
    paths
}

/// Per-split class counts of the public SciCite release.
pub const SCICITE_COUNTS: [[usize; 3]; 3] = [[1109, 2294, 4840], [123, 255, 538], [259, 605, 997]];
