//! Class-imbalance handling: focal and class-weighted losses, SMOTE,
//! random upsampling and inverse-frequency class weights.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{CitationInstance, Corpus};
use crate::error::{Error, Result};
use crate::rng;

/// Floor applied to the gold-class probability inside `log`.
pub const PROB_FLOOR: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal,
    WeightedCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Focusing exponent; only read by `Focal`.
    pub gamma: f64,
    /// Per-class weights. Empty means all ones.
    pub class_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::CrossEntropy,
            gamma: 2.0,
            class_weights: Vec::new(),
        }
    }
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        Self::default()
    }

    pub fn focal(gamma: f64, class_weights: Vec<f64>) -> Self {
        LossConfig {
            kind: LossKind::Focal,
            gamma,
            class_weights,
        }
    }

    pub fn weighted(class_weights: Vec<f64>) -> Self {
        LossConfig {
            kind: LossKind::WeightedCrossEntropy,
            gamma: 0.0,
            class_weights,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.class_weights.is_empty() {
            if self.class_weights.len() != num_classes {
                return Err(Error::InvalidArgument(format!(
                    "{} class weights for {num_classes} classes",
                    self.class_weights.len()
                )));
            }
            if let Some(w) = self.class_weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                return Err(Error::InvalidArgument(format!("class weights must be positive, got {w}")));
            }
        }
        Ok(())
    }

    fn effective_gamma(&self) -> f64 {
        match self.kind {
            LossKind::Focal => self.gamma,
            _ => 0.0,
        }
    }

    fn weight(&self, class: usize) -> f64 {
        match self.kind {
            LossKind::CrossEntropy => 1.0,
            _ => self.class_weights.get(class).copied().unwrap_or(1.0),
        }
    }

    /// Loss of one instance given its gold-class probability.
    pub fn instance_loss(&self, p_gold: f64, gold: usize) -> f64 {
        focal_term(p_gold, self.effective_gamma(), self.weight(gold))
    }

    /// Loss of one instance and its gradient with respect to the logits
    /// that produced `probs` through a softmax.
    pub fn loss_and_logit_grad(&self, probs: &[f64], gold: usize, grad: &mut [f64]) -> f64 {
        let gamma = self.effective_gamma();
        let w = self.weight(gold);
        let p = probs[gold];
        let pf = p.max(PROB_FLOOR);
        let one_minus = (1.0 - p).max(0.0);
        // d loss / d p_gold
        let mut dl_dp = 0.0;
        if p > PROB_FLOOR {
            dl_dp -= w * one_minus.powf(gamma) / p;
        }
        if gamma > 0.0 && one_minus > 0.0 {
            dl_dp += w * gamma * one_minus.powf(gamma - 1.0) * pf.ln();
        }
        for (j, g) in grad.iter_mut().enumerate() {
            let delta = if j == gold { 1.0 } else { 0.0 };
            *g = dl_dp * p * (delta - probs[j]);
        }
        focal_term(p, gamma, w)
    }
}

fn focal_term(p: f64, gamma: f64, weight: f64) -> f64 {
    let modulator = if gamma == 0.0 { 1.0 } else { (1.0 - p).max(0.0).powf(gamma) };
    -weight * modulator * p.max(PROB_FLOOR).ln()
}

fn check_batch(probs: &[Vec<f64>], gold: &[usize]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if probs.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probability rows for {} labels",
            probs.len(),
            gold.len()
        )));
    }
    for (i, (row, &y)) in probs.iter().zip(gold).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "row {i} is not a probability vector (sum {sum})"
            )));
        }
        if y >= row.len() {
            return Err(Error::InvalidArgument(format!("row {i}: label {y} out of range")));
        }
    }
    Ok(())
}

/// Mean over the batch of `-w_y (1 - p_y)^gamma log p_y`.
/// Empty `class_weights` means unit weights.
pub fn focal_loss(probs: &[Vec<f64>], gold: &[usize], gamma: f64, class_weights: &[f64]) -> Result<f64> {
    check_batch(probs, gold)?;
    let cfg = LossConfig::focal(gamma, class_weights.to_vec());
    cfg.validate(probs[0].len())?;
    Ok(mean_loss(&cfg, probs, gold))
}

/// Mean (optionally class-weighted) cross-entropy.
pub fn cross_entropy(probs: &[Vec<f64>], gold: &[usize], class_weights: &[f64]) -> Result<f64> {
    check_batch(probs, gold)?;
    let cfg = LossConfig::weighted(class_weights.to_vec());
    cfg.validate(probs[0].len())?;
    Ok(mean_loss(&cfg, probs, gold))
}

/// Batch loss under any [`LossConfig`].
pub fn batch_loss(cfg: &LossConfig, probs: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    check_batch(probs, gold)?;
    cfg.validate(probs[0].len())?;
    Ok(mean_loss(cfg, probs, gold))
}

fn mean_loss(cfg: &LossConfig, probs: &[Vec<f64>], gold: &[usize]) -> f64 {
    probs
        .iter()
        .zip(gold)
        .map(|(row, &y)| cfg.instance_loss(row[y], y))
        .sum::<f64>()
        / probs.len() as f64
}

/// `N / (num_classes * count_c)` per class.
pub fn class_weights_from(train: &Corpus) -> Result<Vec<f64>> {
    class_weights_from_counts(&train.class_counts(), train.scheme().labels())
}

pub fn class_weights_from_counts(counts: &[usize], labels: &[String]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass {
            class: labels.get(c).cloned().unwrap_or_else(|| c.to_string()),
        });
    }
    let n: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&c| n as f64 / (k * c as f64)).collect())
}

/// Duplicates minority-class instances (with replacement) until every
/// class matches the majority count. Copies get fresh ids and record their
/// source in `meta["upsampled_from"]`.
pub fn random_upsample(corpus: &Corpus, seed: u64) -> Corpus {
    let counts = corpus.class_counts();
    let majority = counts.iter().copied().max().unwrap_or(0);
    let mut r = rng::seeded(seed);
    let mut instances: Vec<CitationInstance> = corpus.instances().to_vec();
    for (class, members) in corpus.class_indices().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        for n in 0..majority - counts[class] {
            let src = &corpus.instances()[members[rng::index(&mut r, members.len())]];
            let mut copy = src.clone();
            copy.id = format!("{}#up{}", src.id, n);
            copy.meta.insert("upsampled_from".into(), src.id.clone());
            instances.push(copy);
        }
    }
    Corpus::from_parts_unchecked(corpus.name().to_string(), corpus.scheme().clone(), instances)
}

/// Row-major real features aligned with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has non-finite values")));
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Tab-separated dump, label first.
    pub fn write_tsv<W: std::io::Write>(&self, labels: &[usize], mut out: W) -> std::io::Result<()> {
        for i in 0..self.rows() {
            write!(out, "{}", labels[i])?;
            for x in self.row(i) {
                write!(out, "\t{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Provenance of one synthetic SMOTE point: `base + lambda * (neighbor - base)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticOrigin {
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct SmoteOutput {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub origins: Vec<SyntheticOrigin>,
}

/// Indices of the `k` nearest same-class points (Euclidean; lower index wins ties).
pub fn nearest_neighbors(features: &FeatureMatrix, members: &[usize], of: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&j| j != of)
        .map(|&j| (sq_dist(features.row(of), features.row(j)), j))
        .collect();
    cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Plans synthetic points without materializing their features.
pub fn smote_plan(
    features: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    k_neighbors: usize,
    targets: &[usize],
    seed: u64,
) -> Result<Vec<SyntheticOrigin>> {
    if labels.len() != features.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    if targets.len() != num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {num_classes} classes",
            targets.len()
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be >= 1".into()));
    }
    let mut members = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        members[y].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if targets[c] < m.len() {
            return Err(Error::InvalidArgument(format!(
                "target {} below current count {} for class {c}",
                targets[c],
                m.len()
            )));
        }
        if targets[c] > m.len() && m.len() < k_neighbors + 1 {
            return Err(Error::ClassTooSmall {
                class: c.to_string(),
                count: m.len(),
                k: k_neighbors,
                needed: k_neighbors + 1,
            });
        }
    }
    let mut r = rng::seeded(seed);
    let mut origins = Vec::new();
    for (c, m) in members.iter().enumerate() {
        let needed = targets[c] - m.len();
        if needed == 0 {
            continue;
        }
        let neighbors: Vec<Vec<usize>> = m
            .iter()
            .map(|&i| nearest_neighbors(features, m, i, k_neighbors))
            .collect();
        for _ in 0..needed {
            let b = rng::index(&mut r, m.len());
            let nn = &neighbors[b];
            let neighbor = nn[rng::index(&mut r, nn.len())];
            let lambda = rng::unit_closed(&mut r);
            origins.push(SyntheticOrigin {
                base: m[b],
                neighbor,
                lambda,
                label: c,
            });
        }
    }
    Ok(origins)
}

/// SMOTE: synthesizes `targets[c] - count_c` points per class by
/// interpolating between a real point and one of its `k_neighbors`
/// nearest same-class neighbors. Returns the synthetic points only.
pub fn smote(
    features: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    k_neighbors: usize,
    targets: &[usize],
    seed: u64,
) -> Result<SmoteOutput> {
    let origins = smote_plan(features, labels, num_classes, k_neighbors, targets, seed)?;
    let dim = features.dim();
    let mut data = Vec::with_capacity(origins.len() * dim);
    for o in &origins {
        let a = features.row(o.base);
        let b = features.row(o.neighbor);
        data.extend(a.iter().zip(b).map(|(x, y)| x + o.lambda * (y - x)));
    }
    Ok(SmoteOutput {
        features: FeatureMatrix { dim, data },
        labels: origins.iter().map(|o| o.label).collect(),
        origins,
    })
}

/// Per-class targets that raise every class to the majority count.
pub fn majority_targets(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    vec![max; num_classes]
}
