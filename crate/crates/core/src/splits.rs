//! Seeded dataset partitioning: fixed-ratio train/test splits, k-fold
//! cross-validation and per-split minority downsampling.
//!
//! Every function is a pure function of `(corpus, parameters, seed)`.
//! Outputs keep the relative corpus order of their members.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    /// Fraction `ratio` of the corpus goes to train.
    FixedRatio {
        ratio: f64,
        seed: u64,
        #[serde(default = "default_true")]
        stratified: bool,
    },
    Kfold {
        k: usize,
        seed: u64,
        #[serde(default = "default_true")]
        stratified: bool,
    },
}

fn default_true() -> bool {
    true
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SplitPlan::FixedRatio { ratio, .. } if !(ratio > 0.0 && ratio < 1.0) => Err(
                Error::InvalidArgument(format!("split ratio must lie in (0, 1), got {ratio}")),
            ),
            SplitPlan::Kfold { k, .. } if k < 2 => Err(Error::InvalidArgument(format!(
                "k-fold needs k >= 2, got {k}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            SplitPlan::FixedRatio { seed, .. } | SplitPlan::Kfold { seed, .. } => seed,
        }
    }
}

/// Train/test positions of a fixed split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FixedSplit {
    pub fn materialize(&self, corpus: &Corpus) -> (Corpus, Corpus) {
        (
            corpus.select(format!("{}-train", corpus.name()), &self.train),
            corpus.select(format!("{}-test", corpus.name()), &self.test),
        )
    }

    pub fn assignment(&self, corpus: &Corpus) -> Assignment {
        let mut tags = vec![String::new(); corpus.len()];
        for &i in &self.train {
            tags[i] = "train".into();
        }
        for &i in &self.test {
            tags[i] = "test".into();
        }
        Assignment::new(corpus, tags)
    }
}

/// Largest-remainder allocation of `ratio * total(counts)` across classes.
pub(crate) fn stratified_quotas(counts: &[usize], ratio: f64) -> Vec<usize> {
    const EPS: f64 = 1e-9;
    let total: usize = counts.iter().sum();
    let target = (ratio * total as f64 + EPS).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&c| ratio * c as f64).collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(counts)
        .map(|(&q, &c)| ((q + EPS).floor() as usize).min(c))
        .collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let rem = |i: usize| exact[i] - quotas[i] as f64;
    order.sort_by(|&a, &b| rem(b).partial_cmp(&rem(a)).unwrap().then(a.cmp(&b)));
    let mut missing = target.saturating_sub(quotas.iter().sum());
    for &i in order.iter().cycle().take(counts.len() * 2) {
        if missing == 0 {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            missing -= 1;
        }
    }
    quotas
}

pub fn fixed_split_indices(
    corpus: &Corpus,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<FixedSplit> {
    SplitPlan::FixedRatio {
        ratio,
        seed,
        stratified,
    }
    .validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut r = rng::seeded(seed);
    let mut is_train = vec![false; corpus.len()];
    if stratified {
        let counts = corpus.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass {
                class: corpus.scheme().name(c).to_string(),
            });
        }
        let quotas = stratified_quotas(&counts, ratio);
        for (mut members, quota) in corpus.class_indices().into_iter().zip(quotas) {
            rng::shuffle(&mut r, &mut members);
            for &i in &members[..quota] {
                is_train[i] = true;
            }
        }
    } else {
        let n_train = (ratio * corpus.len() as f64 + 1e-9).round() as usize;
        let mut all: Vec<usize> = (0..corpus.len()).collect();
        rng::shuffle(&mut r, &mut all);
        for &i in &all[..n_train] {
            is_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| is_train[i]);
    Ok(FixedSplit { train, test })
}

pub fn fixed_split(
    corpus: &Corpus,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Corpus, Corpus)> {
    Ok(fixed_split_indices(corpus, ratio, seed, stratified)?.materialize(corpus))
}

/// One cross-validation fold: `test` is the fold, `train` its complement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldAssignment {
    pub fn materialize(&self, corpus: &Corpus) -> (Corpus, Corpus) {
        (
            corpus.select(format!("{}-fold{}-train", corpus.name(), self.fold), &self.train),
            corpus.select(format!("{}-fold{}-test", corpus.name(), self.fold), &self.test),
        )
    }
}

/// Stratified k-fold.
pub fn kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<FoldAssignment>> {
    kfold_with(corpus, k, seed, true)
}

pub fn kfold_with(
    corpus: &Corpus,
    k: usize,
    seed: u64,
    stratified: bool,
) -> Result<Vec<FoldAssignment>> {
    SplitPlan::Kfold { k, seed, stratified }.validate()?;
    let mut r = rng::seeded(seed);
    let mut fold_of = vec![0usize; corpus.len()];
    if stratified {
        let counts = corpus.class_counts();
        for (c, &n) in counts.iter().enumerate() {
            if n > 0 && n < k {
                return Err(Error::InfeasibleStratification {
                    class: corpus.scheme().name(c).to_string(),
                    count: n,
                    k,
                });
            }
        }
        // Each class is dealt round-robin; the start offset carries over
        // between classes so fold totals also differ by at most one.
        let mut offset = 0;
        for mut members in corpus.class_indices() {
            rng::shuffle(&mut r, &mut members);
            for (j, &i) in members.iter().enumerate() {
                fold_of[i] = (offset + j) % k;
            }
            offset = (offset + members.len()) % k;
        }
    } else {
        if corpus.len() < k {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} instances into {k} folds",
                corpus.len()
            )));
        }
        let mut all: Vec<usize> = (0..corpus.len()).collect();
        rng::shuffle(&mut r, &mut all);
        for (j, &i) in all.iter().enumerate() {
            fold_of[i] = j % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train) = (0..corpus.len()).partition(|&i| fold_of[i] == f);
            FoldAssignment { fold: f, train, test }
        })
        .collect())
}

pub fn folds_assignment(corpus: &Corpus, folds: &[FoldAssignment]) -> Assignment {
    let mut tags = vec![String::new(); corpus.len()];
    for f in folds {
        for &i in &f.test {
            tags[i] = f.fold.to_string();
        }
    }
    Assignment::new(corpus, tags)
}

/// Reduces every class to the smallest non-empty class count, sampling the
/// kept members uniformly without replacement.
pub fn balance_downsample(train: &Corpus, seed: u64) -> Corpus {
    let counts = train.class_counts();
    let Some(minority) = counts.iter().copied().filter(|&c| c > 0).min() else {
        return train.clone();
    };
    if counts.iter().any(|&c| c == 0) {
        warn!("balance_downsample: {} has empty classes; balancing the rest", train.name());
    }
    if counts.iter().all(|&c| c == minority || c == 0) {
        return train.clone();
    }
    let mut r = rng::seeded(seed);
    let mut keep = vec![false; train.len()];
    for mut members in train.class_indices() {
        rng::shuffle(&mut r, &mut members);
        for &i in members.iter().take(minority) {
            keep[i] = true;
        }
    }
    let positions: Vec<usize> = (0..train.len()).filter(|&i| keep[i]).collect();
    train.select(train.name().to_string(), &positions)
}

/// Instance id to split tag (`train`/`test` or fold index), in corpus order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub rows: Vec<(String, String)>,
}

impl Assignment {
    fn new(corpus: &Corpus, tags: Vec<String>) -> Self {
        Assignment {
            rows: corpus.iter().map(|i| i.id.clone()).zip(tags).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "assignment"])?;
        for (id, tag) in &self.rows {
            w.write_record([id, tag])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CitationInstance, LabelScheme};

    pub(crate) fn counts_corpus(counts: &[usize]) -> Corpus {
        let mut inst = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for j in 0..n {
                inst.push(CitationInstance::new(format!("c{label}-{j}"), format!("text {label} {j}"), label));
            }
        }
        Corpus::new("synthetic", LabelScheme::sentiment(), inst).unwrap()
    }

    #[test]
    fn quotas_csc_sized() {
        // 0.7 * (829, 280, 7627) = (580.3, 196.0, 5338.9); total 6115.2 -> 6115
        assert_eq!(stratified_quotas(&[829, 280, 7627], 0.7), vec![580, 196, 5339]);
    }

    #[test]
    fn single_class_seventy_thirty() {
        let c = Corpus::new(
            "one",
            LabelScheme::sentiment(),
            (0..10).map(|i| CitationInstance::new(format!("{i}"), "t", 2)).collect(),
        )
        .unwrap();
        let split = fixed_split_indices(&c, 0.7, 1, false).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (7, 3));
    }

    #[test]
    fn stratified_needs_every_class() {
        let c = counts_corpus(&[3, 0, 4]);
        assert!(matches!(fixed_split(&c, 0.7, 0, true), Err(Error::EmptyClass { .. })));
        assert!(fixed_split(&c, 1.0, 0, false).is_err());
        assert!(fixed_split(&c, 0.0, 0, false).is_err());
    }

    #[test]
    fn kfold_single_class_leave_one_out() {
        let c = Corpus::new(
            "one",
            LabelScheme::sentiment(),
            (0..10).map(|i| CitationInstance::new(format!("{i}"), "t", 1)).collect(),
        )
        .unwrap();
        let folds = kfold(&c, 10, 5).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 9));
    }

    #[test]
    fn kfold_names_offending_class() {
        let c = counts_corpus(&[20, 5, 20]);
        match kfold(&c, 10, 0) {
            Err(Error::InfeasibleStratification { class, count, k }) => {
                assert_eq!((class.as_str(), count, k), ("negative", 5, 10));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(kfold(&c, 1, 0).is_err());
    }

    #[test]
    fn downsample_examples() {
        let out = balance_downsample(&counts_corpus(&[10, 4, 20]), 3);
        assert_eq!(out.class_counts(), vec![4, 4, 4]);
        let balanced = counts_corpus(&[5, 5, 5]);
        assert_eq!(balance_downsample(&balanced, 3), balanced);
    }

    #[test]
    fn assignment_csv() {
        let c = counts_corpus(&[2, 2, 2]);
        let split = fixed_split_indices(&c, 0.5, 9, true).unwrap();
        let mut out = Vec::new();
        split.assignment(&c).write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.matches(",train").count(), 3);
    }
}
