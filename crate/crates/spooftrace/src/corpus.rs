//! Dataset ingestion and attribute labeling.
//!
//! A corpus is described by a manifest: one row per utterance carrying its
//! provenance (`source_system`, the attack id or synthesis system name) and
//! the attribute labels derived from it through an editable label map.
//! Ingestors exist for ASVspoof-style protocol files and MLAAD-style
//! metadata tables; the synthetic generator in [`crate::synth`] emits the
//! same manifest format.

mod ingest;
mod manifest_io;
mod stats;
mod types;

pub use ingest::{ingest_asvspoof, ingest_mlaad, PartitionTag};
pub use manifest_io::{read_manifest, write_manifest};
pub use stats::{corpus_stats, render_stats, StatsTable};
pub use types::{
    AttributeLabelSet, CorpusManifest, InputType, LabelMap, ProvenanceEntry, Task, Utterance,
    BONAFIDE,
};
