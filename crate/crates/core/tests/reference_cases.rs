mod common;

use std::collections::HashMap;

use citeimpact::balance::{class_weights_from, focal_loss, LossConfig};
use citeimpact::cleanse::{dedupe_consistent, find_duplicate_groups, normalize_text, remove_conflicting};
use citeimpact::corpus::{class_distribution, length_stats, CitationInstance, Corpus, LabelScheme};
use citeimpact::metrics::{aggregate_cv, evaluate, ConfusionMatrix, EvaluationReport};
use citeimpact::models::{
    build_vocab, fine_tune, load_model, predict, save_model, train, FineTuneParams, Sampling, Tokenizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{counts_corpus, keyword_corpus, quick_training, small_cnn, FILLER, INTENT_KEYS};

fn corpus_of(texts: &[(&str, usize)]) -> Corpus {
    let inst = texts
        .iter()
        .enumerate()
        .map(|(i, (t, l))| CitationInstance::new(format!("i{i}"), *t, *l))
        .collect();
    Corpus::new("t", LabelScheme::sentiment(), inst).unwrap()
}

#[test]
fn csc_class_shares() {
    let d = class_distribution(&counts_corpus(LabelScheme::sentiment(), &[829, 280, 7627])).unwrap();
    // 7627 / 8736 = 87.3054%; each share is rounded on its own, not as 100 minus the others.
    assert_eq!(d.percentages(2), [9.49, 3.21, 87.31]);
    assert_eq!(d.total, 8736);
}

#[test]
fn mean_lengths_match_direct_average() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut inst = Vec::new();
    let mut sums = [(0usize, 0usize, 0usize); 3];
    for i in 0..100 {
        let n = r.gen_range(1..40);
        let words: Vec<&str> = (0..n).map(|_| FILLER[r.gen_range(0..FILLER.len())]).collect();
        let text = words.join(" ");
        let label = r.gen_range(0..3);
        sums[label].0 += 1;
        sums[label].1 += n;
        sums[label].2 += text.len();
        inst.push(CitationInstance::new(i.to_string(), text, label));
    }
    let corpus = Corpus::new("len", LabelScheme::sentiment(), inst).unwrap();
    let stats = length_stats(&corpus, &Tokenizer::default());
    for (c, (count, toks, chars)) in sums.iter().enumerate() {
        let s = &stats.classes[c];
        assert_eq!(s.count, *count);
        assert!((s.mean_tokens.unwrap() - *toks as f64 / *count as f64).abs() < 1e-12);
        assert!((s.mean_chars.unwrap() - *chars as f64 / *count as f64).abs() < 1e-12);
        assert_eq!(s.histogram.iter().sum::<usize>(), *count);
    }
}

#[test]
fn planted_groups_are_recovered() {
    let mut texts: Vec<(String, usize)> = (0..40).map(|i| (format!("unique sentence {i}"), i % 3)).collect();
    for (g, size) in (2..=6).enumerate() {
        for j in 0..size {
            texts.push((format!("{}repeated  text {g}", " ".repeat(j % 2)), g % 3));
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for i in (1..texts.len()).rev() {
        texts.swap(i, r.gen_range(0..=i));
    }
    let refs: Vec<(&str, usize)> = texts.iter().map(|(t, l)| (t.as_str(), *l)).collect();
    let corpus = corpus_of(&refs);
    // Pairwise oracle: a text is grouped when any other instance normalizes equal.
    let mut want: HashMap<String, usize> = HashMap::new();
    for a in corpus.iter() {
        let same = corpus.iter().filter(|b| normalize_text(&a.text) == normalize_text(&b.text)).count();
        if same > 1 {
            want.insert(normalize_text(&a.text), same);
        }
    }
    let got = find_duplicate_groups(&corpus);
    assert_eq!(got.len(), 5);
    assert_eq!(got.iter().map(|(k, v)| (k.clone(), v.len())).collect::<HashMap<_, _>>(), want);
}

#[test]
fn conflicting_groups_attribute_by_label() {
    let corpus = corpus_of(&[
        ("a", 0),
        ("b", 1),
        ("a", 2),
        ("c", 2),
        ("d", 0),
        ("d", 1),
        ("e", 2),
        ("d", 1),
        ("c", 0),
        ("f", 2),
    ]);
    let (kept, removed) = remove_conflicting(&corpus);
    assert_eq!(removed.len(), 7);
    let mut by_label = [0; 3];
    removed.iter().for_each(|i| by_label[i.label] += 1);
    assert_eq!(by_label, [3, 2, 2]);
    let texts: Vec<&str> = kept.iter().map(|i| i.text.as_str()).collect();
    assert_eq!(texts, ["b", "e", "f"]);
}

#[test]
fn dedupe_keeps_minimal_index() {
    let corpus = corpus_of(&[("x", 2), ("t", 1), ("t ", 1), ("y", 0), (" t", 1), ("t", 1)]);
    let (kept, removed) = dedupe_consistent(&corpus).unwrap();
    assert_eq!(removed.len(), 3);
    assert_eq!(kept.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["i0", "i1", "i3"]);
}

#[test]
fn focal_batch_matches_scalar_formula() {
    let p = [0.9f64, 0.6, 0.3, 0.8];
    let probs: Vec<Vec<f64>> = p.iter().map(|&x| vec![x, (1.0 - x) / 2.0, (1.0 - x) / 2.0]).collect();
    let want = p.iter().map(|&x| -(1.0 - x).powi(2) * x.ln()).sum::<f64>() / 4.0;
    let got = focal_loss(&probs, &[0, 0, 0, 0], 2.0, &[]).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn csc_clean_class_weights() {
    let w = class_weights_from(&counts_corpus(LabelScheme::sentiment(), &[728, 253, 6999])).unwrap();
    let rounded: Vec<f64> = w.iter().map(|x| (x * 1000.0).round() / 1000.0).collect();
    assert_eq!(rounded, [3.654, 10.514, 0.380]);
    for (c, n) in [728.0, 253.0, 6999.0].iter().enumerate() {
        assert!((w[c] - 7980.0 / (3.0 * n)).abs() < 1e-12);
    }
}

#[test]
fn vocabulary_order_matches_recount() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let words: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
    let inst: Vec<CitationInstance> = (0..1000)
        .map(|i| {
            let n = r.gen_range(3..15);
            // Skewed draw so frequencies differ.
            let t: Vec<&str> = (0..n).map(|_| words[r.gen_range(0..300usize).min(r.gen_range(0..300))].as_str()).collect();
            CitationInstance::new(i.to_string(), t.join(" "), i % 3)
        })
        .collect();
    let corpus = Corpus::new("v", LabelScheme::intent(), inst).unwrap();
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for i in corpus.iter() {
        for t in i.text.split(' ') {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut want: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, n)| n >= 2).collect();
    want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let v = build_vocab(&corpus, 2, &Tokenizer::default());
    assert_eq!(v.len(), want.len() + 2);
    for (i, (tok, _)) in want.iter().enumerate() {
        assert_eq!(v.token(i as u32 + 2), *tok);
    }
}

#[test]
fn trained_classifier_contracts() {
    let corpus = keyword_corpus(LabelScheme::intent(), &[20, 20, 20], 6);
    let (clf, report) = train(
        &small_cnn(),
        &corpus,
        None,
        &LossConfig::cross_entropy(),
        &Sampling::None,
        &quick_training(60),
    )
    .unwrap();
    assert!(report.best_epoch.is_some());
    let p = predict(&clf, corpus.instances()).unwrap();
    assert_eq!(p.labels, corpus.labels(), "overfit run reproduces its training labels");
    for row in &p.probabilities {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let t = corpus.instances()[0].text.as_str();
    let dup = clf.predict_texts(&[t, "unrelated words", t]).unwrap();
    assert_eq!(dup.probabilities[0], dup.probabilities[2]);

    // Save, load and re-predict a 32-instance probe.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_model(&clf, &path).unwrap();
    let back = load_model(&path).unwrap();
    let probe = &corpus.instances()[..32];
    assert_eq!(predict(&back, probe).unwrap(), predict(&clf, probe).unwrap());
}

/// Word vectors where each class cue points along its own axis and filler
/// words are small noise, as a pretrained space would separate them.
fn write_vectors(path: &std::path::Path, dim: usize) {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut out = format!("{} {dim}\n", FILLER.len() + 3);
    for (c, k) in INTENT_KEYS.iter().enumerate() {
        let v: Vec<String> = (0..dim).map(|d| if d == c { "1.0".into() } else { "0.0".into() }).collect();
        out.push_str(&format!("{k} {}\n", v.join(" ")));
    }
    for w in FILLER {
        let v: Vec<String> = (0..dim).map(|_| format!("{:.4}", r.gen_range(-0.1..0.1))).collect();
        out.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    std::fs::write(path, out).unwrap();
}

#[test]
fn word_vector_fine_tune_fits_in_five_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let vectors = dir.path().join("vectors.txt");
    write_vectors(&vectors, 16);
    let corpus = keyword_corpus(LabelScheme::intent(), &[20, 20, 20], 7);
    let params = FineTuneParams::default();
    assert_eq!(params.train.epochs, 5);
    let (clf, report) = fine_tune(&format!("word-vectors:{}", vectors.display()), &corpus, None, &params, 1).unwrap();
    assert!(report.epochs_run() <= 5);
    let p = predict(&clf, corpus.instances()).unwrap();
    let acc = evaluate(corpus.scheme(), &corpus.labels(), &p.labels).unwrap().micro_f1;
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn cv_aggregate_of_ten_folds() {
    let labels = LabelScheme::intent().labels().to_vec();
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let reports: Vec<EvaluationReport> = (0..10)
        .map(|_| {
            let counts = (0..3).map(|_| (0..3).map(|_| r.gen_range(1..30u64)).collect()).collect();
            EvaluationReport::from_confusion(ConfusionMatrix::from_counts(&labels, counts).unwrap())
        })
        .collect();
    let cv = aggregate_cv(&reports).unwrap();
    let mean = |f: &dyn Fn(&EvaluationReport) -> f64| reports.iter().map(f).sum::<f64>() / 10.0;
    assert!((cv.averaged.macro_f1 - mean(&|r| r.macro_f1)).abs() < 1e-12);
    assert!((cv.averaged.micro_f1 - mean(&|r| r.micro_f1)).abs() < 1e-12);
    for c in 0..3 {
        let m = mean(&|r| r.per_class_accuracy[c].unwrap());
        assert!((cv.averaged.per_class_accuracy[c].unwrap() - m).abs() < 1e-12);
        for d in 0..3 {
            let sum: u64 = reports.iter().map(|r| r.confusion.counts[c][d]).sum();
            assert_eq!(cv.pooled.confusion.counts[c][d], sum);
        }
    }
    let two = [0.6, 0.8].map(|m| {
        let mut e = reports[0].clone();
        e.micro_f1 = m;
        e
    });
    assert!((aggregate_cv(&two).unwrap().averaged.micro_f1 - 0.7).abs() < 1e-12);
}
