//! Confusion matrices, per-class accuracy (class recall), micro-F1 and
//! macro-F1, plus cross-validation aggregation.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelScheme;
use crate::error::{Error, Result};

/// `counts[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[String]) -> Self {
        ConfusionMatrix {
            labels: labels.to_vec(),
            counts: vec![vec![0; labels.len()]; labels.len()],
        }
    }

    pub fn from_counts(labels: &[String], counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::InvalidArgument("confusion matrix must be square over the scheme".into()));
        }
        Ok(ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// `(tp, fp, fn)` for one class.
    pub fn tp_fp_fn(&self, class: usize) -> (u64, u64, u64) {
        let tp = self.counts[class][class];
        (tp, self.predicted(class) - tp, self.support(class) - tp)
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::InvalidArgument("confusion matrices over different schemes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(scheme: &LabelScheme, gold: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no labels to evaluate".into()));
    }
    let k = scheme.len();
    let mut m = ConfusionMatrix::zeros(scheme.labels());
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= k || p >= k {
            return Err(Error::InvalidArgument(format!(
                "label pair ({g}, {p}) outside a {k}-label scheme"
            )));
        }
        m.counts[g][p] += 1;
    }
    Ok(m)
}

/// Diagonal over row sum; `None` for a class with no gold instances.
pub fn per_class_accuracy(m: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..m.num_classes())
        .map(|c| {
            let support = m.support(c);
            (support > 0).then(|| m.counts[c][c] as f64 / support as f64)
        })
        .collect()
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn per_class_f1(m: &ConfusionMatrix) -> Vec<f64> {
    (0..m.num_classes())
        .map(|c| {
            let (tp, fp, fn_) = m.tp_fp_fn(c);
            f1_from_counts(tp, fp, fn_)
        })
        .collect()
}

/// F1 over TP/FP/FN pooled across classes.
pub fn micro_f1(m: &ConfusionMatrix) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in 0..m.num_classes() {
        let (a, b, d) = m.tp_fp_fn(c);
        tp += a;
        fp += b;
        fn_ += d;
    }
    f1_from_counts(tp, fp, fn_)
}

/// Unweighted mean of per-class F1. Zero-support classes count as 0.
pub fn macro_f1(m: &ConfusionMatrix) -> f64 {
    for c in 0..m.num_classes() {
        if m.support(c) == 0 {
            warn!("class `{}` has no gold instances; its F1 counts as 0", m.labels[c]);
        }
    }
    let f1 = per_class_f1(m);
    f1.iter().sum::<f64>() / f1.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub labels: Vec<String>,
    pub instances: u64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn from_confusion(m: ConfusionMatrix) -> Self {
        let k = m.num_classes();
        let precision = (0..k)
            .map(|c| {
                let p = m.predicted(c);
                if p == 0 {
                    0.0
                } else {
                    m.counts[c][c] as f64 / p as f64
                }
            })
            .collect();
        let recall = (0..k)
            .map(|c| {
                let s = m.support(c);
                if s == 0 {
                    0.0
                } else {
                    m.counts[c][c] as f64 / s as f64
                }
            })
            .collect();
        EvaluationReport {
            labels: m.labels.clone(),
            instances: m.total(),
            per_class_accuracy: per_class_accuracy(&m),
            precision,
            recall,
            f1: per_class_f1(&m),
            micro_f1: micro_f1(&m),
            macro_f1: macro_f1(&m),
            confusion: m,
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "class", "value"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (c, label) in self.labels.iter().enumerate() {
            w.write_record(["accuracy", label, &opt(self.per_class_accuracy[c])])?;
            w.write_record(["precision", label, &self.precision[c].to_string()])?;
            w.write_record(["recall", label, &self.recall[c].to_string()])?;
            w.write_record(["f1", label, &self.f1[c].to_string()])?;
        }
        w.write_record(["micro_f1", "", &self.micro_f1.to_string()])?;
        w.write_record(["macro_f1", "", &self.macro_f1.to_string()])?;
        w.write_record(["instances", "", &self.instances.to_string()])?;
        let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

pub fn evaluate(scheme: &LabelScheme, gold: &[usize], pred: &[usize]) -> Result<EvaluationReport> {
    Ok(EvaluationReport::from_confusion(confusion(scheme, gold, pred)?))
}

/// Cross-validation summary: fold-mean metrics and pooled-matrix metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// Unweighted mean of every scalar metric across folds; confusion summed.
    pub averaged: EvaluationReport,
    /// Metrics recomputed from the summed confusion matrix.
    pub pooled: EvaluationReport,
}

pub fn aggregate_cv(reports: &[EvaluationReport]) -> Result<CvReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fold reports to aggregate".into()))?;
    let k = first.labels.len();
    let mut pooled = ConfusionMatrix::zeros(&first.labels);
    for r in reports {
        if r.labels != first.labels {
            return Err(Error::InvalidArgument("fold reports use different label schemes".into()));
        }
        pooled.add(&r.confusion)?;
    }
    let n = reports.len() as f64;
    let mean_vec = |f: &dyn Fn(&EvaluationReport) -> &Vec<f64>| -> Vec<f64> {
        (0..k).map(|c| reports.iter().map(|r| f(r)[c]).sum::<f64>() / n).collect()
    };
    let per_class_accuracy = (0..k)
        .map(|c| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.per_class_accuracy[c]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let averaged = EvaluationReport {
        labels: first.labels.clone(),
        instances: pooled.total(),
        per_class_accuracy,
        precision: mean_vec(&|r| &r.precision),
        recall: mean_vec(&|r| &r.recall),
        f1: mean_vec(&|r| &r.f1),
        micro_f1: reports.iter().map(|r| r.micro_f1).sum::<f64>() / n,
        macro_f1: reports.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        confusion: pooled.clone(),
    };
    Ok(CvReport {
        folds: reports.len(),
        averaged,
        pooled: EvaluationReport::from_confusion(pooled),
    })
}
