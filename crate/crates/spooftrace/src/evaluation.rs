//! Metrics, confusion analysis, report files, and embedding projection.
//!
//! Everything here is post-hoc and deterministic: identical predictions
//! produce byte-identical report files. Zero-support classes are never
//! silently dropped; they contribute zero to macro averages and are
//! flagged so averages stay comparable across runs.

mod export;
mod metrics;
mod project;
mod report;

pub use export::export_embeddings;
pub use metrics::{
    confusion, error_analysis, macro_accuracy, macro_f1, micro_accuracy, per_class_metrics,
    ClassMetrics, ConfusedPair, ConfusionMatrix,
};
pub use project::{pca_2d, project_2d, Projection, ProjectionMethod, ProjectionSummary};
pub use report::{evaluate, report_from_predictions, write_report_files, EvalReport};
