//! Residual convolutional backbone producing fixed-size spoof embeddings.
//!
//! Input is a feature matrix treated as a one-channel image `[T, F]`.
//! A small stem feeds a stack of stages of basic residual blocks; the
//! first block of every stage halves both axes. Mean and standard
//! deviation over the time axis collapse variable-length inputs to a
//! fixed vector, which a final affine layer maps to the embedding.

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use super::nn::{
    relu4, relu4_backward, BatchNorm2d, BnCache, Conv2d, Linear, MeanStdPool, PoolCache, Tensors,
};
use crate::frontend::FeatureMatrix;
use crate::{seeds, Error, Result};

/// Backbone architecture. All fields have working defaults, so configs
/// only need to mention what they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResNetConfig {
    /// Feature coefficients per frame the network expects.
    pub input_coeffs: usize,
    /// Residual blocks per stage.
    pub block_counts: Vec<usize>,
    /// Channel width per stage; must pair up with `block_counts`.
    pub widths: Vec<usize>,
    /// Output embedding size.
    pub embed_dim: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        ResNetConfig {
            input_coeffs: 60,
            block_counts: vec![2, 2, 2, 2],
            widths: vec![16, 32, 64, 128],
            embed_dim: 256,
        }
    }
}

/// Spatial size after one stride-2, pad-1, kernel-3 (or kernel-1 pad-0)
/// convolution.
fn halve(v: usize) -> usize {
    (v - 1) / 2 + 1
}

impl ResNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_coeffs == 0 {
            return Err(Error::InvalidConfig("input_coeffs must be positive".into()));
        }
        if self.block_counts.is_empty() || self.block_counts.len() != self.widths.len() {
            return Err(Error::InvalidConfig(format!(
                "block_counts ({}) and widths ({}) must be equal-length and non-empty",
                self.block_counts.len(),
                self.widths.len()
            )));
        }
        if self.block_counts.iter().any(|&b| b == 0) || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(
                "block counts and widths must all be positive".into(),
            ));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be positive".into()));
        }
        Ok(())
    }

    /// Feature-axis width after all stages.
    fn final_coeff_width(&self) -> usize {
        let mut f = self.input_coeffs;
        for _ in 0..self.block_counts.len() {
            f = halve(f);
        }
        f
    }

    /// Input width of the final affine layer: mean and std per channel
    /// and coefficient column.
    fn pool_dim(&self) -> usize {
        2 * self.widths[self.widths.len() - 1] * self.final_coeff_width()
    }
}

struct Block {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    proj: Option<(Conv2d, BatchNorm2d)>,
}

/// Embedding extractor with explicit parameter and buffer stores.
#[derive(Debug, Clone)]
pub struct Backbone {
    cfg: ResNetConfig,
    pub params: Tensors,
    pub buffers: Tensors,
}

struct BlockCache {
    x: Array4<f64>,
    bn1: BnCache,
    relu1: Array4<f64>,
    bn2: BnCache,
    proj_bn: Option<BnCache>,
    out: Array4<f64>,
}

/// Per-layer activations retained for the backward pass.
pub struct TrainCache {
    input: Array4<f64>,
    stem_bn: BnCache,
    stem_out: Array4<f64>,
    blocks: Vec<BlockCache>,
    pool: PoolCache,
    pooled: Array2<f64>,
}

impl Backbone {
    pub fn new(cfg: ResNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = Tensors::new();
        let mut buffers = Tensors::new();
        let mut rng = seeds::rng(seed, "backbone-init", 0);
        let net = Backbone {
            cfg,
            params: Tensors::new(),
            buffers: Tensors::new(),
        };
        net.stem_conv().init(&mut params, &mut rng);
        net.stem_bn().init(&mut params, &mut buffers);
        for stage in net.stages() {
            for block in stage {
                block.conv1.init(&mut params, &mut rng);
                block.bn1.init(&mut params, &mut buffers);
                block.conv2.init(&mut params, &mut rng);
                block.bn2.init(&mut params, &mut buffers);
                if let Some((pc, pb)) = &block.proj {
                    pc.init(&mut params, &mut rng);
                    pb.init(&mut params, &mut buffers);
                }
            }
        }
        net.pool_fc().init(&mut params, &mut rng);
        Ok(Backbone { params, buffers, ..net })
    }

    /// Rebuild from checkpointed tensors, verifying names and shapes.
    pub fn from_parts(cfg: ResNetConfig, params: Tensors, buffers: Tensors) -> Result<Self> {
        cfg.validate()?;
        let reference = Backbone::new(cfg.clone(), 0)?;
        let check = |what: &str, expected: &Tensors, got: &Tensors| -> Result<()> {
            for (name, arr) in expected.iter() {
                let g = got.0.get(name).ok_or_else(|| {
                    Error::InvalidInput(format!("checkpoint lacks {what} tensor `{name}`"))
                })?;
                if g.shape() != arr.shape() {
                    return Err(Error::InvalidInput(format!(
                        "{what} tensor `{name}` has shape {:?}, expected {:?}",
                        g.shape(),
                        arr.shape()
                    )));
                }
            }
            if got.len() != expected.len() {
                let extra: Vec<&str> = got
                    .iter()
                    .map(|(n, _)| n)
                    .filter(|n| !expected.0.contains_key(*n))
                    .collect();
                return Err(Error::InvalidInput(format!(
                    "checkpoint carries unexpected {what} tensors: {extra:?}"
                )));
            }
            Ok(())
        };
        check("parameter", &reference.params, &params)?;
        check("buffer", &reference.buffers, &buffers)?;
        Ok(Backbone { cfg, params, buffers })
    }

    pub fn config(&self) -> &ResNetConfig {
        &self.cfg
    }

    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn stem_conv(&self) -> Conv2d {
        Conv2d {
            name: "stem.conv".into(),
            in_ch: 1,
            out_ch: self.cfg.widths[0],
            kernel: 3,
            stride: 1,
            pad: 1,
        }
    }

    fn stem_bn(&self) -> BatchNorm2d {
        BatchNorm2d {
            name: "stem.bn".into(),
            ch: self.cfg.widths[0],
        }
    }

    fn stages(&self) -> Vec<Vec<Block>> {
        let mut stages = Vec::new();
        let mut in_ch = self.cfg.widths[0];
        for (s, (&count, &width)) in self
            .cfg
            .block_counts
            .iter()
            .zip(self.cfg.widths.iter())
            .enumerate()
        {
            let mut blocks = Vec::new();
            for b in 0..count {
                let stride = if b == 0 { 2 } else { 1 };
                let name = format!("stage{s}.block{b}");
                let needs_proj = stride != 1 || in_ch != width;
                blocks.push(Block {
                    conv1: Conv2d {
                        name: format!("{name}.conv1"),
                        in_ch,
                        out_ch: width,
                        kernel: 3,
                        stride,
                        pad: 1,
                    },
                    bn1: BatchNorm2d {
                        name: format!("{name}.bn1"),
                        ch: width,
                    },
                    conv2: Conv2d {
                        name: format!("{name}.conv2"),
                        in_ch: width,
                        out_ch: width,
                        kernel: 3,
                        stride: 1,
                        pad: 1,
                    },
                    bn2: BatchNorm2d {
                        name: format!("{name}.bn2"),
                        ch: width,
                    },
                    proj: needs_proj.then(|| {
                        (
                            Conv2d {
                                name: format!("{name}.proj"),
                                in_ch,
                                out_ch: width,
                                kernel: 1,
                                stride,
                                pad: 0,
                            },
                            BatchNorm2d {
                                name: format!("{name}.projbn"),
                                ch: width,
                            },
                        )
                    }),
                });
                in_ch = width;
            }
            stages.push(blocks);
        }
        stages
    }

    fn pool_fc(&self) -> Linear {
        Linear {
            name: "pool.fc".into(),
            in_dim: self.cfg.pool_dim(),
            out_dim: self.cfg.embed_dim,
        }
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (n, c, t, f) = x.dim();
        if c != 1 {
            return Err(Error::InvalidInput(format!(
                "backbone expects a single input channel, got {c}"
            )));
        }
        if f != self.cfg.input_coeffs {
            return Err(Error::InvalidInput(format!(
                "backbone expects {} coefficients per frame, got {f}",
                self.cfg.input_coeffs
            )));
        }
        if n == 0 || t == 0 {
            return Err(Error::InvalidInput("backbone input is empty".into()));
        }
        Ok(())
    }

    /// Training-mode forward. Batch statistics normalize activations;
    /// running statistics move only when `update_running` is set, so
    /// numeric probes can re-run forward without perturbing state.
    pub fn forward_train(
        &mut self,
        x: &Array4<f64>,
        update_running: bool,
    ) -> Result<(Array2<f64>, TrainCache)> {
        self.check_input(x)?;
        let h = self.stem_conv().forward(&self.params, x);
        let (h, stem_bn) =
            self.stem_bn()
                .forward_train(&self.params, &mut self.buffers, &h, update_running);
        let stem_out = relu4(&h);

        let mut cur = stem_out.clone();
        let mut blocks = Vec::new();
        for stage in self.stages() {
            for block in stage {
                let x_in = cur;
                let main = block.conv1.forward(&self.params, &x_in);
                let (main, bn1) =
                    block
                        .bn1
                        .forward_train(&self.params, &mut self.buffers, &main, update_running);
                let relu1 = relu4(&main);
                let main = block.conv2.forward(&self.params, &relu1);
                let (main, bn2) =
                    block
                        .bn2
                        .forward_train(&self.params, &mut self.buffers, &main, update_running);
                let (skip, proj_bn) = match &block.proj {
                    None => (x_in.clone(), None),
                    Some((pc, pb)) => {
                        let s = pc.forward(&self.params, &x_in);
                        let (s, c) =
                            pb.forward_train(&self.params, &mut self.buffers, &s, update_running);
                        (s, Some(c))
                    }
                };
                let out = relu4(&(&main + &skip));
                cur = out.clone();
                blocks.push(BlockCache {
                    x: x_in,
                    bn1,
                    relu1,
                    bn2,
                    proj_bn,
                    out,
                });
            }
        }

        let (pooled, pool) = MeanStdPool::forward(&cur);
        let emb = self.pool_fc().forward(&self.params, &pooled);
        Ok((
            emb,
            TrainCache {
                input: x.clone(),
                stem_bn,
                stem_out,
                blocks,
                pool,
                pooled,
            },
        ))
    }

    /// Inference-mode forward using running statistics. Any layer that
    /// produces a non-finite value is named in the error.
    pub fn forward_eval_batch(&self, x: &Array4<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let finite = |arr: &Array4<f64>, layer: &str| -> Result<()> {
            if arr.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Diverged(format!(
                    "non-finite activation after layer `{layer}`"
                )))
            }
        };
        let h = self.stem_conv().forward(&self.params, x);
        let h = self.stem_bn().forward_eval(&self.params, &self.buffers, &h);
        let mut cur = relu4(&h);
        finite(&cur, "stem")?;
        for stage in self.stages() {
            for block in stage {
                let main = block.conv1.forward(&self.params, &cur);
                let main = block.bn1.forward_eval(&self.params, &self.buffers, &main);
                let main = relu4(&main);
                let main = block.conv2.forward(&self.params, &main);
                let main = block.bn2.forward_eval(&self.params, &self.buffers, &main);
                let skip = match &block.proj {
                    None => cur,
                    Some((pc, pb)) => {
                        let s = pc.forward(&self.params, &cur);
                        pb.forward_eval(&self.params, &self.buffers, &s)
                    }
                };
                cur = relu4(&(&main + &skip));
                finite(&cur, &block.conv1.name[..block.conv1.name.len() - 6])?;
            }
        }
        let (pooled, _) = MeanStdPool::forward(&cur);
        let emb = self.pool_fc().forward(&self.params, &pooled);
        if !emb.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged(
                "non-finite activation after layer `pool.fc`".into(),
            ));
        }
        Ok(emb)
    }

    /// Embed a single feature matrix (inference mode).
    pub fn embed(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        let (t, f) = features.data.dim();
        if f != self.cfg.input_coeffs {
            return Err(Error::InvalidInput(format!(
                "feature matrix has {f} coefficients per frame, backbone expects {}",
                self.cfg.input_coeffs
            )));
        }
        let mut x = Array4::zeros((1, 1, t, f));
        x.index_axis_mut(ndarray::Axis(0), 0)
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&features.data);
        let emb = self.forward_eval_batch(&x)?;
        Ok(emb.row(0).to_vec())
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// the loss gradient at the embedding output.
    pub fn backward(&self, cache: &TrainCache, grad_emb: &Array2<f64>) -> Tensors {
        let mut grads = Tensors::new();
        let d_pooled = self
            .pool_fc()
            .backward(&self.params, &cache.pooled, grad_emb, &mut grads);
        let mut d_cur = MeanStdPool::backward(&cache.pool, &d_pooled);

        let stages = self.stages();
        let flat: Vec<&Block> = stages.iter().flatten().collect();
        for (block, bc) in flat.iter().zip(cache.blocks.iter()).rev() {
            let d_out = relu4_backward(&bc.out, &d_cur);
            // Main branch.
            let d_main = block.bn2.backward(&self.params, &bc.bn2, &d_out, &mut grads);
            let d_main = block
                .conv2
                .backward(&self.params, &bc.relu1, &d_main, &mut grads);
            let d_main = relu4_backward(&bc.relu1, &d_main);
            let d_main = block.bn1.backward(&self.params, &bc.bn1, &d_main, &mut grads);
            let d_x_main = block.conv1.backward(&self.params, &bc.x, &d_main, &mut grads);
            // Skip branch.
            let d_x_skip = match (&block.proj, &bc.proj_bn) {
                (None, None) => d_out,
                (Some((pc, pb)), Some(pcache)) => {
                    let d_s = pb.backward(&self.params, pcache, &d_out, &mut grads);
                    pc.backward(&self.params, &bc.x, &d_s, &mut grads)
                }
                _ => unreachable!("cache always mirrors block structure"),
            };
            d_cur = d_x_main + d_x_skip;
        }

        let d_stem = relu4_backward(&cache.stem_out, &d_cur);
        let d_stem = self
            .stem_bn()
            .backward(&self.params, &cache.stem_bn, &d_stem, &mut grads);
        self.stem_conv()
            .backward(&self.params, &cache.input, &d_stem, &mut grads);
        grads
    }

    /// Content hash over parameters and buffers, for checking that a
    /// frozen backbone really stayed frozen.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        let mut absorb = |store: &Tensors| {
            for (name, arr) in store.iter() {
                bytes.extend_from_slice(name.as_bytes());
                bytes.push(0);
                for &d in arr.shape() {
                    bytes.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for &v in arr.iter() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        absorb(&self.params);
        absorb(&self.buffers);
        crate::digest::sha256_hex(&bytes)
    }
}
