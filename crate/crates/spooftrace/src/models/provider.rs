//! Embedding sources for two-stage training and clustering.
//!
//! A provider either runs a frozen backbone over features or serves
//! precomputed vectors by utterance id. Callers pass features lazily so
//! the fixture path never touches audio.

use super::resnet::Backbone;
use crate::frontend::FeatureMatrix;
use crate::protocol::EmbeddingSet;
use crate::{Error, Result};

pub enum EmbeddingProvider {
    /// Frozen network: embeddings are computed from features on demand.
    Backbone(Box<Backbone>),
    /// Precomputed table keyed by utterance id.
    Fixture(EmbeddingSet),
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Backbone(net) => net.embed_dim(),
            EmbeddingProvider::Fixture(set) => set.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingProvider::Backbone(_) => "backbone",
            EmbeddingProvider::Fixture(_) => "fixture",
        }
    }

    /// Embedding for one utterance. `features` is only invoked on the
    /// backbone path.
    pub fn embed(
        &self,
        id: &str,
        features: impl FnOnce() -> Result<FeatureMatrix>,
    ) -> Result<Vec<f64>> {
        match self {
            EmbeddingProvider::Backbone(net) => net.embed(&features()?),
            EmbeddingProvider::Fixture(set) => set
                .get(id)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("no stored embedding for utterance `{id}`"))
                }),
        }
    }
}
