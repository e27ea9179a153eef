use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balance::{majority_targets, random_upsample, smote_plan, FeatureMatrix, LossConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::classifier::Classifier;
use crate::models::config::ModelConfig;
use crate::models::network::{Forward, Network};
use crate::models::vocab::{build_vocab, encode_unpadded, Vocabulary};
use crate::models::Tokenizer;
use crate::rng::{self, Rng};
use crate::splits::balance_downsample;

/// How the training split is resampled before fitting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    None,
    Upsample,
    Downsample,
    /// Synthetic minority examples interpolated in embedding space.
    Smote {
        #[serde(default = "default_smote_k")]
        k: usize,
    },
}

fn default_smote_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 50,
            patience: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::InvalidArgument("clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Macro-F1 per epoch on the monitored set.
    pub monitor_trace: Vec<f64>,
    /// `validation` or `train` (when no validation corpus was given).
    pub monitor: String,
    pub best_epoch: Option<usize>,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub config: ModelConfig,
    pub params: TrainParams,
    pub sampling: Sampling,
    pub train_instances: usize,
    pub synthetic_instances: usize,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Example {
    Real(usize),
    Mix { a: usize, b: usize, lambda: f64, label: usize },
}

pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            if g == 0.0 && self.m[i] == 0.0 && self.v[i] == 0.0 {
                continue;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Encoded training material shared by the native and pretrained paths.
pub(crate) struct Prepared {
    pub net: Network,
    pub vocab: Vocabulary,
    pub seqs: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

pub(crate) fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary, max_len: usize, tk: &Tokenizer) -> Vec<Vec<u32>> {
    corpus
        .iter()
        .map(|inst| encode_unpadded(&inst.text, vocab, max_len, tk))
        .collect()
}

pub(crate) fn example_input(net: &Network, p: &[f64], seqs: &[Vec<u32>], ex: Example) -> ndarray::Array2<f64> {
    match ex {
        Example::Real(i) => net.embed(p, &seqs[i]),
        Example::Mix { a, b, lambda, .. } => net.embed_mix(p, &seqs[a], &seqs[b], lambda),
    }
}

fn example_label(labels: &[usize], ex: Example) -> usize {
    match ex {
        Example::Real(i) => labels[i],
        Example::Mix { label, .. } => label,
    }
}

/// Forward + backward for one example; returns the (unscaled) loss and
/// accumulates `scale * dLoss/dparams` into `grad`.
pub(crate) fn example_grad(
    net: &Network,
    p: &[f64],
    seqs: &[Vec<u32>],
    labels: &[usize],
    ex: Example,
    loss: &LossConfig,
    dropout: Option<&mut Rng>,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let x = example_input(net, p, seqs, ex);
    let fwd: Forward = net.forward(p, &x, dropout);
    let mut dlogits = vec![0.0; net.num_classes()];
    let value = loss.loss_and_logit_grad(&fwd.probs, example_label(labels, ex), &mut dlogits);
    for d in &mut dlogits {
        *d *= scale;
    }
    let dx = net.backward(p, &fwd, &dlogits, grad);
    match ex {
        Example::Real(i) => net.scatter_embedding(grad, &seqs[i], &dx, 1.0),
        Example::Mix { a, b, lambda, .. } => {
            net.scatter_embedding(grad, &seqs[a], &dx, 1.0 - lambda);
            net.scatter_embedding(grad, &seqs[b], &dx, lambda);
        }
    }
    value
}

pub(crate) fn predict_ids(net: &Network, p: &[f64], seqs: &[Vec<u32>]) -> Vec<usize> {
    seqs.iter()
        .map(|s| argmax(&net.forward(p, &net.embed(p, s), None).probs))
        .collect()
}

/// First index of the maximum, so ties go to the lower class.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn resample(train: &Corpus, sampling: &Sampling, seed: u64) -> Corpus {
    match sampling {
        Sampling::Upsample => random_upsample(train, seed),
        Sampling::Downsample => balance_downsample(train, seed),
        Sampling::None | Sampling::Smote { .. } => train.clone(),
    }
}

fn smote_examples(prep: &Prepared, p: &[f64], k: usize, seed: u64) -> Result<Vec<Example>> {
    let c = prep.net.num_classes();
    let rows: Vec<Vec<f64>> = prep.seqs.iter().map(|s| prep.net.mean_embedding(p, s)).collect();
    let features = FeatureMatrix::from_rows(&rows)?;
    let mut targets = majority_targets(&prep.labels, c);
    let mut counts = vec![0usize; c];
    for &y in &prep.labels {
        counts[y] += 1;
    }
    for (t, &n) in targets.iter_mut().zip(&counts) {
        if n == 0 {
            *t = 0;
        }
    }
    let plan = smote_plan(&features, &prep.labels, c, k, &targets, seed)?;
    Ok(plan
        .into_iter()
        .map(|o| Example::Mix {
            a: o.base,
            b: o.neighbor,
            lambda: o.lambda,
            label: o.label,
        })
        .collect())
}

fn clip(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Shared optimisation loop. `params` holds the initialization on entry
/// and the best-epoch parameters on return.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit(
    prep: &Prepared,
    params: &mut Vec<f64>,
    examples: &[Example],
    val: Option<(&[Vec<u32>], &[usize])>,
    scheme: &crate::corpus::LabelScheme,
    loss: &LossConfig,
    tp: &TrainParams,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, Option<usize>)> {
    let net = &prep.net;
    let mut order_rng = rng::seeded(rng::derive(seed, 1));
    let mut dropout_rng = rng::seeded(rng::derive(seed, 2));
    let mut adam = Adam::new(params.len(), tp.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<Example> = examples.to_vec();
    let (mut losses, mut trace) = (Vec::new(), Vec::new());
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut since_best = 0;
    for epoch in 0..tp.epochs {
        rng::shuffle(&mut order_rng, &mut order);
        let mut total = 0.0;
        for batch in order.chunks(tp.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &ex in batch {
                let l = example_grad(
                    net,
                    params,
                    &prep.seqs,
                    &prep.labels,
                    ex,
                    loss,
                    Some(&mut dropout_rng),
                    scale,
                    &mut grad,
                );
                total += l;
            }
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            clip(&mut grad, tp.clip_norm);
            adam.step(params, &grad);
        }
        let mean_loss = total / order.len().max(1) as f64;
        let (seqs, gold) = val.unwrap_or((&prep.seqs, &prep.labels));
        let pred = predict_ids(net, params, seqs);
        let metric = metrics::macro_f1(&metrics::confusion(scheme, gold, &pred)?);
        log::debug!("epoch {epoch}: loss {mean_loss:.5} monitor macro-F1 {metric:.4}");
        losses.push(mean_loss);
        trace.push(metric);
        match &best {
            Some((_, m, _)) if metric <= *m => since_best += 1,
            _ => {
                best = Some((epoch, metric, params.clone()));
                since_best = 0;
            }
        }
        if since_best >= tp.patience.max(1) {
            break;
        }
    }
    let best_epoch = best.map(|(e, _, p)| {
        *params = p;
        e
    });
    Ok((losses, trace, best_epoch))
}

/// Trains a from-scratch baseline (or the pooled encoder when the
/// topology is `pretrained` and a vector-initialised net is supplied via
/// the pretrained backend).
pub fn train(
    config: &ModelConfig,
    train: &Corpus,
    val: Option<&Corpus>,
    loss: &LossConfig,
    sampling: &Sampling,
    params: &TrainParams,
) -> Result<(Classifier, TrainReport)> {
    config.validate()?;
    params.validate()?;
    if config.topology == crate::models::Topology::Pretrained {
        return Err(Error::InvalidArgument(
            "pretrained topology is trained through pretrained::fine_tune".into(),
        ));
    }
    train_with_init(config, train, val, loss, sampling, params, |_, _, _| Ok(()))
}

pub(crate) fn train_with_init(
    config: &ModelConfig,
    train: &Corpus,
    val: Option<&Corpus>,
    loss: &LossConfig,
    sampling: &Sampling,
    params: &TrainParams,
    init_hook: impl FnOnce(&Network, &Vocabulary, &mut [f64]) -> Result<()>,
) -> Result<(Classifier, TrainReport)> {
    let started = Instant::now();
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let scheme = train.scheme().clone();
    if let Some(v) = val {
        if v.scheme() != &scheme {
            return Err(Error::InvalidArgument("train and validation corpora use different label schemes".into()));
        }
    }
    loss.validate(scheme.len())?;
    let seed = config.seed;
    let tk = Tokenizer::default();
    let train = resample(train, sampling, rng::derive(seed, 3));
    let vocab = build_vocab(&train, config.min_frequency, &tk);
    let net = Network::new(config, vocab.len(), scheme.len());
    let mut p = net.init(&mut rng::seeded(seed));
    init_hook(&net, &vocab, &mut p)?;
    let prep = Prepared {
        seqs: encode_corpus(&train, &vocab, config.max_seq_len, &tk),
        labels: train.labels(),
        net,
        vocab,
    };
    let mut examples: Vec<Example> = (0..prep.seqs.len()).map(Example::Real).collect();
    if let Sampling::Smote { k } = sampling {
        examples.extend(smote_examples(&prep, &p, *k, rng::derive(seed, 4))?);
    }
    let val_enc = val.map(|v| (encode_corpus(v, &prep.vocab, config.max_seq_len, &tk), v.labels()));
    let (train_loss, monitor_trace, best_epoch) = fit(
        &prep,
        &mut p,
        &examples,
        val_enc.as_ref().map(|(s, l)| (s.as_slice(), l.as_slice())),
        &scheme,
        loss,
        params,
        seed,
    )?;
    let report = TrainReport {
        train_loss,
        monitor_trace,
        monitor: if val.is_some() { "validation" } else { "train" }.into(),
        best_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        seed,
        config: config.clone(),
        params: params.clone(),
        sampling: sampling.clone(),
        train_instances: prep.seqs.len(),
        synthetic_instances: examples.len() - prep.seqs.len(),
    };
    let classifier = Classifier::native(config.clone(), scheme, prep.vocab, p)?;
    Ok((classifier, report))
}

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Compares analytic gradients with central finite differences on a
/// random `fraction` of the parameters (at least 20), without dropout.
pub fn gradient_check(
    config: &ModelConfig,
    corpus: &Corpus,
    loss: &LossConfig,
    fraction: f64,
    seed: u64,
) -> Result<GradientCheck> {
    config.validate()?;
    let tk = Tokenizer::default();
    let vocab = build_vocab(corpus, config.min_frequency, &tk);
    let net = Network::new(config, vocab.len(), corpus.scheme().len());
    let mut p = net.init(&mut rng::seeded(seed));
    let seqs = encode_corpus(corpus, &vocab, config.max_seq_len, &tk);
    let labels = corpus.labels();
    let examples: Vec<Example> = (0..seqs.len()).map(Example::Real).collect();
    let scale = 1.0 / examples.len() as f64;
    let objective = |p: &[f64]| -> f64 {
        examples
            .iter()
            .map(|&ex| {
                let x = example_input(&net, p, &seqs, ex);
                let probs = net.forward(p, &x, None).probs;
                loss.instance_loss(probs[example_label(&labels, ex)], example_label(&labels, ex))
            })
            .sum::<f64>()
            * scale
    };
    let mut grad = vec![0.0; p.len()];
    for &ex in &examples {
        example_grad(&net, &p, &seqs, &labels, ex, loss, None, scale, &mut grad);
    }
    // Only embedding rows that occur in the batch carry signal.
    let mut used = vec![false; vocab.len()];
    seqs.iter().flatten().for_each(|&id| used[id as usize] = true);
    let emb = net.embedding_range();
    let e = config.embedding_dim;
    let candidates: Vec<usize> = (0..p.len())
        .filter(|&i| !emb.contains(&i) || (used[(i - emb.start) / e] && (i - emb.start) / e != 0))
        .collect();
    let n = ((candidates.len() as f64 * fraction).ceil() as usize).clamp(20.min(candidates.len()), candidates.len());
    let mut r = rng::seeded(rng::derive(seed, 9));
    let mut pick = candidates;
    rng::shuffle(&mut r, &mut pick);
    pick.truncate(n);
    let h = 1e-5;
    let mut worst = (0.0f64, 0usize);
    for &i in &pick {
        let orig = p[i];
        p[i] = orig + h;
        let up = objective(&p);
        p[i] = orig - h;
        let down = objective(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-7);
        let rel = (analytic - numeric).abs() / denom;
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradientCheck {
        checked: pick.len(),
        max_relative_error: worst.0,
        worst_index: worst.1,
    })
}
