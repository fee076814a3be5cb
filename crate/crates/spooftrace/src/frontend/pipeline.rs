//! One-stop feature computation: window placement, cepstra, deltas, mask.
//!
//! Training and evaluation must agree on every knob here, so the whole
//! recipe travels as one configurable value and is snapshotted into
//! checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::audio::{decode_audio, load_window, place_window, CropPolicy};
use super::augment::freq_mask;
use super::lfcc::{add_deltas, lfcc, FeatureMatrix, LfccConfig};
use crate::{Error, Result, CANONICAL_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturePipeline {
    /// Fixed crop length fed to the model.
    pub window_seconds: f64,
    pub lfcc: LfccConfig,
    /// Append delta and delta-delta coefficients (triples the width).
    pub deltas: bool,
}

impl Default for FeaturePipeline {
    fn default() -> Self {
        FeaturePipeline {
            window_seconds: 4.0,
            lfcc: LfccConfig::default(),
            deltas: true,
        }
    }
}

impl FeaturePipeline {
    pub fn validate(&self) -> Result<()> {
        if !self.window_seconds.is_finite() || self.window_seconds <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        self.lfcc.validate(CANONICAL_RATE)?;
        if self.window_len() < self.lfcc.window_len(CANONICAL_RATE) {
            return Err(Error::InvalidConfig(
                "crop window is shorter than one analysis frame".into(),
            ));
        }
        Ok(())
    }

    /// Crop length in samples at the canonical rate.
    pub fn window_len(&self) -> usize {
        (self.window_seconds * CANONICAL_RATE as f64).round() as usize
    }

    /// Coefficients per frame after optional deltas.
    pub fn n_coeffs(&self) -> usize {
        self.lfcc.n_coeffs * if self.deltas { 3 } else { 1 }
    }

    /// Cepstra (plus deltas when configured) for one already-cropped window.
    pub fn features_from_window(&self, window: &[f64]) -> Result<FeatureMatrix> {
        let base = lfcc(window, CANONICAL_RATE, &self.lfcc)?;
        if self.deltas {
            add_deltas(&base)
        } else {
            Ok(base)
        }
    }

    /// Deterministic features for evaluation: crop at the start.
    pub fn eval_features(&self, path: &Path) -> Result<FeatureMatrix> {
        let win = load_window(path, self.window_len(), CropPolicy::Start)?;
        self.features_from_window(&win.samples)
    }

    /// Training features from pre-decoded samples: seeded crop, then an
    /// optional frequency mask of up to `width` coefficients.
    pub fn train_features(
        &self,
        samples: &[f64],
        crop_seed: u64,
        mask: Option<(usize, u64)>,
    ) -> Result<FeatureMatrix> {
        let window = place_window(samples, self.window_len(), CropPolicy::Random { seed: crop_seed });
        let mut features = self.features_from_window(&window)?;
        if let Some((width, mask_seed)) = mask {
            freq_mask(&mut features, width, mask_seed)?;
        }
        Ok(features)
    }

    /// Convenience wrapper over [`decode_audio`] so callers building an
    /// audio cache need only this type.
    pub fn decode(&self, path: &Path) -> Result<Vec<f64>> {
        decode_audio(path)
    }
}
