//! Acoustic frontend: waveform loading and LFCC feature extraction.
//!
//! The pipeline is fixed-rate: every file is decoded, mixed to mono,
//! resampled to [`crate::CANONICAL_RATE`] and cut to a fixed-length window
//! before features are computed. Short files are repeat-padded so every
//! utterance yields the same frame count.

mod audio;
mod augment;
mod cache;
mod lfcc;
mod pipeline;

pub use audio::{decode_audio, load_window, CropPolicy, LoadedWindow};
pub use augment::freq_mask;
pub use cache::{read_features, write_features};
pub use lfcc::{add_deltas, lfcc, FeatureMatrix, LfccConfig};
pub use pipeline::FeaturePipeline;
