use std::ffi::CString;
use std::sync::Once;

use citeimpact_py::citeimpact_module;
use pyo3::prelude::*;

static INIT: Once = Once::new();

fn run(code: &str) -> PyResult<()> {
    INIT.call_once(|| {
        pyo3::append_to_inittab!(citeimpact_module);
        Python::initialize();
    });
    Python::attach(|py| py.run(&CString::new(code).unwrap(), None, None))
}

#[test]
fn corpus_metrics_and_training_round_trip() {
    run(r#"
import citeimpact as ci

cues = {"positive": "excellent", "negative": "flawed", "neutral": "describes"}
records = [(f"{l}-{i}", f"work {i} here {cue} shown", l) for l, cue in cues.items() for i in range(10)]
corpus = ci.Corpus("sentiment", records)
assert corpus.class_counts() == [10, 10, 10]
assert corpus.records() == records

clean, ledger = ci.cleanse(corpus)
assert len(clean) == 30 and sum(r["removed_duplicate"] for r in ledger) == 0

r = ci.evaluate("sentiment", ["positive", "negative", "neutral", "neutral"],
                ["positive", "neutral", "neutral", "neutral"])
assert abs(r["micro_f1"] - 0.75) < 1e-12
assert r["confusion"]["counts"][1] == [0, 0, 1]

folds = ci.kfold(corpus, 5, 1)
assert len(folds) == 5 and all(len(test) == 6 for _, test in folds)

clf, report = ci.Classifier.train(
    corpus,
    model={"topology": "cnn", "layers": 1, "units": 6, "conv_widths": [2], "embedding_dim": 6, "dropout": 0.0},
    training={"epochs": 30, "learning_rate": 0.02},
)
labels, probs = clf.predict(["a flawed thing", "excellent stuff"])
assert clf.architecture == "L 1 F 6 C 2"
assert clf.evaluate(corpus)["micro_f1"] >= 0.9
"#)
    .unwrap();
}

#[test]
fn errors_carry_their_kind() {
    let err = run(r#"
import citeimpact as ci
ci.Corpus("intent", [("a", "x", "positive")])
"#)
    .unwrap_err();
    Python::attach(|py| {
        assert!(err.get_type(py).name().unwrap().to_string().contains("CiteImpactError"));
        assert!(err.value(py).to_string().starts_with("unknown_label:"), "{}", err.value(py));
    });
}
