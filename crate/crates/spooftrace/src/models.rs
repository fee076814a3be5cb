//! Trainable models: spoof-embedding backbone, margin loss, linear heads.
//!
//! Everything computes in `f64` so analytic gradients can be validated
//! against central finite differences. Parameters live in a flat
//! name-to-array map ([`nn::Tensors`]), which makes optimizers,
//! checkpoints and gradient checks uniform across architectures.

pub mod nn;

mod checkpoint;
mod head;
mod lmcl;
mod provider;
mod resnet;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use head::{ce_loss, head_logits, predict_from_logits, softmax, ClassifierHead, HeadCache};
pub use lmcl::{lmcl_inference_logits, lmcl_loss, renormalize_rows, LmclParams};
pub use provider::EmbeddingProvider;
pub use resnet::{Backbone, ResNetConfig, TrainCache};
