//! Speaker-disjoint protocol construction.
//!
//! Spoofed utterances carry no reliable speaker labels, so voices are
//! recovered by clustering speaker-verification embeddings on the unit
//! sphere. Whole voice groups are then assigned to train/dev/eval so no
//! voice spans two partitions, and classes that collapse into a single
//! voice cluster are dropped as degenerate.

mod embeddings;
mod kmeans;
mod partition;
mod spec_io;

pub use embeddings::{read_embeddings, write_embeddings, EmbeddingSet};
pub use kmeans::{
    knee_from_curve, select_k_elbow, spherical_kmeans, spherical_kmeans_from, KneeReport,
    VoiceClustering,
};
pub use partition::{assign_voice_ids, filter_degenerate, partition_disjoint};
pub use spec_io::{emit_protocol, read_protocol, Partition, ProtocolRow, ProtocolSpec};
