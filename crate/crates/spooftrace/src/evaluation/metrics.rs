//! Confusion matrices and the scalar metrics derived from them.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

/// Prediction tallies with rows indexed by true class, columns by
/// predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of truly-`i` samples.
    pub fn support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Number of samples predicted as `j`.
    pub fn predicted(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Rows divided by their support. Zero-support rows stay all-zero
    /// and their indices are returned alongside.
    pub fn normalized(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::with_capacity(self.counts.len());
        let mut zero_rows = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            let support = self.support(i);
            if support == 0 {
                zero_rows.push(i);
                rows.push(vec![0.0; row.len()]);
            } else {
                rows.push(row.iter().map(|&c| c as f64 / support as f64).collect());
            }
        }
        (rows, zero_rows)
    }
}

/// Tally predictions against ground truth over a fixed class list.
pub fn confusion(preds: &[String], truths: &[String], classes: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if classes.is_empty() {
        return Err(Error::InvalidInput("class list is empty".into()));
    }
    let mut index = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        if index.insert(c.as_str(), i).is_some() {
            return Err(Error::InvalidInput(format!("duplicate class `{c}`")));
        }
    }
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (p, t) in preds.iter().zip(truths.iter()) {
        let ti = *index
            .get(t.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("true label `{t}` not in class list")))?;
        let pi = *index
            .get(p.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("predicted label `{p}` not in class list")))?;
        counts[ti][pi] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// Fraction of all samples on the diagonal.
pub fn micro_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("no scored samples".into()));
    }
    let trace: u64 = (0..cm.n_classes()).map(|i| cm.counts[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

/// Unweighted mean of per-class recall; zero-support classes count 0.
pub fn macro_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::InvalidInput("no scored samples".into()));
    }
    let mut acc = 0.0;
    for i in 0..cm.n_classes() {
        let support = cm.support(i);
        if support > 0 {
            acc += cm.counts[i][i] as f64 / support as f64;
        }
    }
    Ok(acc / cm.n_classes() as f64)
}

/// Per-class precision, recall and F1. Undefined ratios (no support, no
/// predictions) resolve to 0 and the class is flagged when unsupported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_support: bool,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.n_classes())
        .map(|i| {
            let support = cm.support(i);
            let predicted = cm.predicted(i);
            let hits = cm.counts[i][i] as f64;
            let precision = if predicted > 0 { hits / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { hits / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: cm.classes[i].clone(),
                support,
                predicted,
                precision,
                recall,
                f1,
                zero_support: support == 0,
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::InvalidInput("no scored samples".into()));
    }
    let per_class = per_class_metrics(cm);
    Ok(per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64)
}

/// One off-diagonal confusion cell from the row-normalized view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusedPair {
    pub true_class: String,
    pub predicted_class: String,
    pub rate: f64,
}

/// Off-diagonal normalized rates at or above `threshold`, strongest
/// first; ties break on class names so output order is total.
pub fn error_analysis(cm: &ConfusionMatrix, threshold: f64) -> Result<Vec<ConfusedPair>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let (rows, _) = cm.normalized();
    let mut pairs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, &rate) in row.iter().enumerate() {
            if i != j && rate >= threshold {
                pairs.push(ConfusedPair {
                    true_class: cm.classes[i].clone(),
                    predicted_class: cm.classes[j].clone(),
                    rate,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.rate
            .partial_cmp(&a.rate)
            .expect("rates are finite")
            .then_with(|| a.true_class.cmp(&b.true_class))
            .then_with(|| a.predicted_class.cmp(&b.predicted_class))
    });
    Ok(pairs)
}
