"""Smoke test for the Python extension.

Build and install first:

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run ``python python/smoke_test.py``.
"""

import json
import random
import sys
import tempfile
from pathlib import Path

import citeimpact as ci

CUES = {"positive": "excellent", "negative": "flawed", "neutral": "describes"}
FILLER = "the model data work results approach method study".split()


def keyword_records(n_per_class, seed):
    rng = random.Random(seed)
    records = []
    for label, cue in CUES.items():
        for i in range(n_per_class):
            words = rng.sample(FILLER, 5) + [cue]
            rng.shuffle(words)
            records.append((f"{label}-{i}", " ".join(words), label))
    return records


def main():
    corpus = ci.Corpus("sentiment", keyword_records(12, 1), name="smoke")
    assert len(corpus) == 36 and corpus.class_counts() == [12, 12, 12]
    assert corpus.labels == ["positive", "negative", "neutral"]
    dist = corpus.distribution()
    assert dist["total"] == 36

    # A duplicate with the same label is dropped; a conflicting pair goes entirely.
    extra = corpus.records() + [("dup", corpus.records()[0][1], "positive"),
                                ("c1", "odd one", "positive"), ("c2", "odd  one", "negative")]
    clean, ledger = ci.cleanse(ci.Corpus("sentiment", extra))
    assert len(clean) == 36, len(clean)
    assert [row["removed_conflicting"] for row in ledger] == [1, 1, 0]

    folds = ci.kfold(corpus, 4, seed=3)
    assert sorted(i for _, test in folds for i in test) == list(range(36))
    train_idx, test_idx = ci.fixed_split(corpus, 0.75, seed=3)
    assert len(train_idx) == 27 and len(test_idx) == 9

    report = ci.evaluate("sentiment", ["positive", "neutral"], ["positive", "negative"])
    assert report["micro_f1"] == 0.5

    assert abs(ci.focal_loss([[0.7, 0.2, 0.1]], [0], 0.0) - ci.cross_entropy([[0.7, 0.2, 0.1]], [0])) < 1e-12

    train = corpus.select(train_idx)
    test = corpus.select(test_idx)
    model = {"topology": "cnn", "layers": 2, "units": 8, "conv_widths": [2, 3],
             "embedding_dim": 8, "dropout": 0.0}
    clf, trace = ci.Classifier.train(train, model=model,
                                     training={"epochs": 20, "learning_rate": 0.01})
    assert trace["train_instances"] == 27
    labels, probs = clf.predict([r[1] for r in test.records()])
    assert len(labels) == 9 and all(abs(sum(p) - 1.0) < 1e-9 for p in probs)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.bin"
        clf.save(path)
        again = ci.Classifier.load(path)
        assert again.predict([r[1] for r in test.records()]) == (labels, probs)
        scored = again.evaluate(test)

        corpus.export(Path(tmp) / "smoke.jsonl")
        config = {
            "name": "smoke",
            "task": "sentiment",
            "dataset": {"format": "corpus", "path": str(Path(tmp) / "smoke.jsonl")},
            "split": {"kind": "kfold", "k": 3},
            "model": model,
            "training": {"epochs": 5, "learning_rate": 0.01},
            "save_models": False,
        }
        run = ci.run_experiment(config, out_dir=Path(tmp) / "runs", workers=2)
        assert run["cv"]["folds"] == 3
        assert Path(run["run_dir"], "manifest.json").exists()

    try:
        ci.Corpus.load_csc("/nonexistent/csc.txt")
    except ci.CiteImpactError as e:
        assert str(e).startswith("io:"), e
    else:
        raise AssertionError("missing file did not raise")

    print(json.dumps({"ok": True, "test_micro_f1": scored["micro_f1"],
                      "cv_macro_f1": run["cv"]["averaged"]["macro_f1"]}))


if __name__ == "__main__":
    sys.exit(main())
