//! Evaluation reports: scored predictions rolled up into per-class
//! metrics, scalar summaries, and plot-ready dumps.

use std::path::Path;

use serde::Serialize;

use super::metrics::{
    confusion, error_analysis, macro_accuracy, macro_f1, micro_accuracy, per_class_metrics,
    ClassMetrics, ConfusedPair, ConfusionMatrix,
};
use crate::corpus::{CorpusManifest, Task};
use crate::protocol::{EmbeddingSet, Partition, ProtocolSpec};
use crate::training::Checkpoint;
use crate::{Error, Result};

/// How many confused pairs the summary keeps.
const TOP_CONFUSED: usize = 5;

/// Full evaluation result for one task over one split.
///
/// Accuracy is reported two ways because the literature uses both
/// without saying which: `micro_accuracy` is the plain hit rate,
/// `macro_accuracy` is the unweighted mean of per-class recall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    /// Matrix class order: model classes first, then any truth-only
    /// classes (sorted) appended at the end.
    pub classes: Vec<String>,
    pub n_scored: usize,
    pub micro_accuracy: f64,
    pub macro_accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub top_confused: Vec<ConfusedPair>,
    /// True classes the model cannot name. Their samples score as
    /// always-wrong instead of aborting the run.
    pub unseen_classes: Vec<String>,
    pub confusion: ConfusionMatrix,
}

/// Roll scored predictions up into a report.
///
/// Every prediction must come from `model_classes`; truth labels may
/// not, in which case the extra classes are appended to the matrix and
/// listed in `unseen_classes`.
pub fn report_from_predictions(
    task: &str,
    preds: &[String],
    truths: &[String],
    model_classes: &[String],
) -> Result<EvalReport> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no scored samples".into()));
    }
    for p in preds {
        if !model_classes.contains(p) {
            return Err(Error::InvalidInput(format!(
                "prediction `{p}` is not one of the model's classes"
            )));
        }
    }
    let mut unseen: Vec<String> = truths
        .iter()
        .filter(|t| !model_classes.contains(t))
        .cloned()
        .collect();
    unseen.sort();
    unseen.dedup();

    let mut classes = model_classes.to_vec();
    classes.extend(unseen.iter().cloned());

    let cm = confusion(preds, truths, &classes)?;
    let top_confused = error_analysis(&cm, 0.0)?
        .into_iter()
        .filter(|p| p.rate > 0.0)
        .take(TOP_CONFUSED)
        .collect();
    Ok(EvalReport {
        task: task.to_string(),
        classes,
        n_scored: preds.len(),
        micro_accuracy: micro_accuracy(&cm)?,
        macro_accuracy: macro_accuracy(&cm)?,
        macro_f1: macro_f1(&cm)?,
        per_class: per_class_metrics(&cm),
        top_confused,
        unseen_classes: unseen,
        confusion: cm,
    })
}

/// Score a trained checkpoint over the protocol's eval split and roll
/// the results up into a report.
///
/// Entries are scored in id order so repeated runs produce identical
/// reports. `embeddings` is required by head-only checkpoints that were
/// trained on precomputed vectors and ignored otherwise.
pub fn evaluate(
    ckpt: &Checkpoint,
    manifest: &CorpusManifest,
    spec: &ProtocolSpec,
    task: Task,
    embeddings: Option<&EmbeddingSet>,
) -> Result<EvalReport> {
    if ckpt.task != task {
        return Err(Error::InvalidInput(format!(
            "checkpoint was trained for task `{}`, not `{}`",
            ckpt.task.as_str(),
            task.as_str()
        )));
    }
    let mut items: Vec<_> = manifest
        .entries()
        .iter()
        .filter(|(u, _)| spec.partition_of(&u.id) == Some(Partition::Eval))
        .collect();
    items.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    if items.is_empty() {
        return Err(Error::InvalidInput(
            "the protocol's eval split matches no manifest entries".into(),
        ));
    }

    let pipeline = &ckpt.config.run.features;
    let mut preds = Vec::with_capacity(items.len());
    let mut truths = Vec::with_capacity(items.len());
    for (utt, labels) in items {
        let path = Path::new(&utt.audio_path);
        let (class, _) = ckpt.predict(&utt.id, || pipeline.eval_features(path), embeddings)?;
        preds.push(class);
        truths.push(task.label_of(utt, labels));
    }
    report_from_predictions(task.as_str(), &preds, &truths, &ckpt.class_names)
}

/// Write the report bundle under `dir`: `report.json` (the full
/// structure), `confusion.tsv` (raw counts), and
/// `confusion_normalized.csv` (heatmap-ready rates). Identical reports
/// produce byte-identical files.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))?;
    crate::tsv::write_file(&dir.join("report.json"), format!("{json}\n"))?;

    let classes = report.confusion.classes();
    let mut tsv = String::from("truth");
    for c in classes {
        tsv.push('\t');
        tsv.push_str(c);
    }
    tsv.push('\n');
    for (i, row) in report.confusion.counts().iter().enumerate() {
        tsv.push_str(&classes[i]);
        for &count in row {
            tsv.push_str(&format!("\t{count}"));
        }
        tsv.push('\n');
    }
    crate::tsv::write_file(&dir.join("confusion.tsv"), tsv)?;

    let (rows, _) = report.confusion.normalized();
    let mut csv = String::from("truth");
    for c in classes {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    for (i, row) in rows.iter().enumerate() {
        csv.push_str(&classes[i]);
        for rate in row {
            csv.push_str(&format!(",{rate}"));
        }
        csv.push('\n');
    }
    crate::tsv::write_file(&dir.join("confusion_normalized.csv"), csv)?;
    Ok(())
}
