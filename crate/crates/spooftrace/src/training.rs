//! Training runs: end-to-end attribute classifiers, binary detectors,
//! and frozen-backbone heads, with per-epoch selection on a dev split.

mod checkpoint_io;
mod config;
mod dataset;
mod optim;
mod run;

pub use checkpoint_io::{fresh_run_dir, write_run_dir, Checkpoint, ModelState, RunProvenance};
pub use config::{RunConfig, SelectionMetric, Strategy, TrainConfig};
pub use dataset::{assemble, DataItem, TaskDataset};
pub use optim::Adam;
pub use run::{
    select_best, train_binary, train_e2e, train_two_stage, EpochMetrics, SelectionRecord,
};
