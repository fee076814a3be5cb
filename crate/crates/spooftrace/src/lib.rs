//! Spoofed-speech source tracing toolkit.
//!
//! Classifies the generative attributes of spoofed speech — input type
//! (text / speech / bonafide), acoustic model, and vocoder — and builds
//! speaker-disjoint evaluation protocols from spoof-dataset metadata.
//!
//! The pipeline, end to end:
//!
//! ```text
//! metadata ──▶ corpus      (manifests + attribute label maps)
//! embeddings ─▶ protocol   (spherical k-means voices, disjoint partitions)
//! audio ──────▶ frontend   (LFCC + deltas, frequency masking)
//!               models     (ResNet-style backbone, LMCL, linear heads)
//!               training   (end-to-end and frozen-backbone two-stage)
//!               evaluation (confusion, macro F1, error analysis, 2-D maps)
//! ```
//!
//! Two learning strategies are supported: *end-to-end*, which trains the
//! whole backbone per attribute task, and *two-stage*, which freezes a
//! binary spoof-detection backbone and trains a lightweight head on its
//! embeddings. External countermeasure embeddings (e.g. 160- or
//! 768-dimensional vectors from pretrained detectors) plug in as fixture
//! files in the same pipeline.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release --example synth_corpus
//! cargo run --release --example train_e2e
//! ```
//!
//! or the `spooftrace` binary, which exposes the same operations as
//! subcommands (`synth`, `build-protocol`, `extract-features`, `train`,
//! `evaluate`, `report`).

pub mod cli;
pub mod corpus;
pub mod evaluation;
pub mod frontend;
pub mod models;
pub mod protocol;
pub mod synth;
pub mod training;

mod error;
pub(crate) mod digest;
pub(crate) mod seeds;
#[cfg(test)]
pub(crate) mod testutil;
pub(crate) mod tsv;

pub use error::{Error, Result};

/// Canonical sample rate; audio at other rates is resampled on load.
pub const CANONICAL_RATE: u32 = 16_000;
