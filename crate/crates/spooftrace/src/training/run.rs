//! The training loops and epoch selection.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array4, Ix2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint_io::{Checkpoint, ModelState, RunProvenance};
use super::config::{SelectionMetric, Strategy, TrainConfig};
use super::dataset::{assemble, DataItem};
use super::optim::Adam;
use crate::corpus::{CorpusManifest, Task};
use crate::evaluation::{confusion, macro_f1, micro_accuracy};
use crate::frontend::FeatureMatrix;
use crate::models::nn::Tensors;
use crate::models::{
    ce_loss, head_logits, lmcl_inference_logits, lmcl_loss, predict_from_logits,
    renormalize_rows, Backbone, ClassifierHead, EmbeddingProvider,
};
use crate::protocol::ProtocolSpec;
use crate::{seeds, Error, Result};

/// One epoch's record in the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub dev_macro_f1: f64,
}

/// Which epoch was kept and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub metric: String,
    pub epoch: usize,
    pub value: f64,
}

/// Index of the history entry maximizing `metric`; earliest epoch wins
/// ties.
pub fn select_best(history: &[EpochMetrics], metric: &str) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::InvalidInput("empty metric history".into()));
    }
    let read: fn(&EpochMetrics) -> f64 = match metric {
        "dev_accuracy" => |m| m.dev_accuracy,
        "dev_macro_f1" => |m| m.dev_macro_f1,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown selection metric `{other}`"
            )));
        }
    };
    let mut best = 0;
    for (i, m) in history.iter().enumerate() {
        if read(m) > read(&history[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// Stack per-utterance feature matrices into a [N, 1, T, C] batch.
fn batch_from_features(feats: &[FeatureMatrix]) -> Result<Array4<f64>> {
    let (t, c) = feats[0].data.dim();
    let mut x = Array4::zeros((feats.len(), 1, t, c));
    for (i, f) in feats.iter().enumerate() {
        if f.data.dim() != (t, c) {
            return Err(Error::InvalidInput(format!(
                "feature matrix {i} is {:?}, expected {:?} (mixed clip lengths in one batch)",
                f.data.dim(),
                (t, c)
            )));
        }
        x.slice_mut(ndarray::s![i, 0, .., ..]).assign(&f.data);
    }
    Ok(x)
}

/// Training-epoch visit order over dataset indices.
///
/// The balanced variant oversamples every class to the majority count
/// (cycling each class's own shuffled list), then shuffles the union.
fn epoch_order(
    labels: &[usize],
    n_classes: usize,
    balanced: bool,
    master_seed: u64,
    epoch: usize,
) -> Vec<usize> {
    let mut rng = seeds::rng(master_seed, "order", epoch as u64);
    if !balanced {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        return order;
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        per_class[label].push(i);
    }
    let target = per_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut order = Vec::with_capacity(target * n_classes);
    for members in per_class.iter_mut() {
        members.shuffle(&mut rng);
        for k in 0..target {
            order.push(members[k % members.len()]);
        }
    }
    order.shuffle(&mut rng);
    order
}

/// Deterministic dev evaluation: features are start-cropped and computed
/// once; the network runs in inference mode.
struct DevSet {
    feats: Vec<FeatureMatrix>,
    truths: Vec<String>,
}

impl DevSet {
    fn build(items: &[DataItem], classes: &[String], cfg: &TrainConfig) -> Result<Self> {
        let mut feats = Vec::with_capacity(items.len());
        let mut truths = Vec::with_capacity(items.len());
        for item in items {
            feats.push(cfg.run.features.eval_features(Path::new(&item.path))?);
            truths.push(classes[item.label].clone());
        }
        Ok(DevSet { feats, truths })
    }

    fn score(
        &self,
        net: &Backbone,
        w: &Array2<f64>,
        scale: f64,
        classes: &[String],
        batch: usize,
    ) -> Result<(f64, f64)> {
        let mut preds = Vec::with_capacity(self.feats.len());
        for chunk in self.feats.chunks(batch) {
            let x = batch_from_features(chunk)?;
            let emb = net.forward_eval_batch(&x)?;
            let logits = lmcl_inference_logits(&emb, w, scale)?;
            preds.extend(predict_from_logits(&logits).into_iter().map(|p| classes[p].clone()));
        }
        let cm = confusion(&preds, &self.truths, classes)?;
        Ok((micro_accuracy(&cm)?, macro_f1(&cm)?))
    }
}

fn pick(metric: SelectionMetric, accuracy: f64, f1: f64) -> f64 {
    match metric {
        SelectionMetric::DevAccuracy => accuracy,
        SelectionMetric::DevMacroF1 => f1,
    }
}

fn provenance_of(manifest: &CorpusManifest, seed: u64) -> RunProvenance {
    RunProvenance {
        dataset_name: manifest.dataset_name.clone(),
        created_from: manifest.created_from.clone(),
        seed,
    }
}

/// Train backbone and margin-loss weights jointly on one attribute task.
pub fn train_e2e(
    manifest: &CorpusManifest,
    spec: &ProtocolSpec,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    if cfg.strategy != Strategy::E2e {
        return Err(Error::InvalidConfig(
            "train_e2e requires strategy = e2e".into(),
        ));
    }
    cfg.validate()?;
    let ds = assemble(manifest, spec, cfg.task)?;
    let seed = cfg.run.seed;
    let batch_size = cfg.batch_size();
    let pipeline = &cfg.run.features;

    let mut net = Backbone::new(cfg.run.backbone.clone(), seeds::derive(seed, "model", 0))?;
    let mut w = {
        let mut rng = seeds::rng(seed, "lmcl", 0);
        let normal = Normal::new(0.0, 1.0).expect("valid distribution");
        let mut w = Array2::from_shape_fn((ds.classes.len(), net.embed_dim()), |_| {
            normal.sample(&mut rng)
        });
        renormalize_rows(&mut w)?;
        w
    };

    // Decoded waveforms are reused every epoch; features are not, because
    // the random crop and mask change per epoch.
    let mut audio: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if cfg.run.cache_audio {
        for item in &ds.train {
            audio.insert(item.id.clone(), pipeline.decode(Path::new(&item.path))?);
        }
    }
    let dev = DevSet::build(&ds.dev, &ds.classes, cfg)?;

    let mut opt = Adam::new(cfg.learning_rate());
    let mut w_store = Tensors::new();
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.run.epochs);
    let mut best: Option<(f64, Backbone, Array2<f64>)> = None;
    let n_train = ds.train.len();

    for epoch in 0..cfg.run.epochs {
        let order = epoch_order(
            &ds.train.iter().map(|i| i.label).collect::<Vec<_>>(),
            ds.classes.len(),
            cfg.run.balanced_sampler,
            seed,
            epoch,
        );
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(batch_size).enumerate() {
            let mut feats = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let item = &ds.train[idx];
                let stream = (epoch * n_train + idx) as u64;
                let mask = cfg
                    .run
                    .augment
                    .then(|| (cfg.run.freq_mask_width, seeds::derive(seed, "mask", stream)));
                let crop_seed = seeds::derive(seed, "crop", stream);
                let fm = match audio.get(&item.id) {
                    Some(samples) => pipeline.train_features(samples, crop_seed, mask)?,
                    None => {
                        let samples = pipeline.decode(Path::new(&item.path))?;
                        pipeline.train_features(&samples, crop_seed, mask)?
                    }
                };
                feats.push(fm);
                labels.push(item.label);
            }
            let x = batch_from_features(&feats)?;
            let (emb, cache) = net.forward_train(&x, true)?;
            let (loss, d_emb, d_w) = lmcl_loss(&emb, &labels, &w, &cfg.run.lmcl)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}, step {step}: loss is {loss}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = net.backward(&cache, &d_emb);
            let mut w_grads = Tensors::new();
            w_grads.insert("lmcl.w", d_w.into_dyn());
            w_store.insert("lmcl.w", w.into_dyn());
            opt.step(&mut [(&mut net.params, &grads), (&mut w_store, &w_grads)]);
            w = w_store
                .0
                .remove("lmcl.w")
                .expect("weights were just inserted")
                .into_dimensionality::<Ix2>()
                .expect("weights stay a matrix");
            renormalize_rows(&mut w)?;
        }

        let (dev_accuracy, dev_macro_f1) =
            dev.score(&net, &w, cfg.run.lmcl.scale, &ds.classes, batch_size)?;
        let value = pick(cfg.run.selection_metric, dev_accuracy, dev_macro_f1);
        if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
            best = Some((value, net.clone(), w.clone()));
        }
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            dev_accuracy,
            dev_macro_f1,
        });
    }

    let best_epoch = select_best(&history, cfg.run.selection_metric.as_str())?;
    let (value, backbone, lmcl_w) = best.expect("at least one epoch ran");
    Ok(Checkpoint {
        task: cfg.task,
        strategy: cfg.strategy,
        config: cfg.clone(),
        class_names: ds.classes,
        selection: SelectionRecord {
            metric: cfg.run.selection_metric.as_str().to_string(),
            epoch: best_epoch,
            value,
        },
        selection_split: ds.selection_split,
        history,
        provenance: provenance_of(manifest, seed),
        model: ModelState::E2e { backbone, lmcl_w },
    })
}

/// Standard bonafide-vs-spoof training; the usual first stage of the
/// two-stage pipeline.
pub fn train_binary(
    manifest: &CorpusManifest,
    spec: &ProtocolSpec,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let mut cfg = cfg.clone();
    cfg.task = Task::Binary;
    train_e2e(manifest, spec, &cfg)
}

/// Train a classifier head on frozen embeddings.
///
/// Embeddings are computed once up front (start-cropped, no
/// augmentation, since a frozen provider maps each utterance to a single
/// vector) and the provider is never mutated.
pub fn train_two_stage(
    manifest: &CorpusManifest,
    spec: &ProtocolSpec,
    provider: &EmbeddingProvider,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    if cfg.strategy != Strategy::TwoStage {
        return Err(Error::InvalidConfig(
            "train_two_stage requires strategy = two_stage".into(),
        ));
    }
    cfg.validate()?;
    let ds = assemble(manifest, spec, cfg.task)?;
    let seed = cfg.run.seed;
    let batch_size = cfg.batch_size();
    let dim = provider.dim();

    let embed_all = |items: &[DataItem]| -> Result<Array2<f64>> {
        let mut x = Array2::zeros((items.len(), dim));
        for (i, item) in items.iter().enumerate() {
            let v = provider.embed(&item.id, || {
                cfg.run.features.eval_features(Path::new(&item.path))
            })?;
            if v.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "embedding for `{}` has dim {}, provider promised {dim}",
                    item.id,
                    v.len()
                )));
            }
            for (j, val) in v.iter().enumerate() {
                x[[i, j]] = *val;
            }
        }
        Ok(x)
    };
    let x_train = embed_all(&ds.train)?;
    let x_dev = embed_all(&ds.dev)?;
    let y_train: Vec<usize> = ds.train.iter().map(|i| i.label).collect();
    let dev_truths: Vec<String> = ds.dev.iter().map(|i| ds.classes[i.label].clone()).collect();

    let hidden = (cfg.run.head_hidden > 0).then_some(cfg.run.head_hidden);
    let mut head = ClassifierHead::new(
        dim,
        &ds.classes,
        hidden,
        &mut seeds::rng(seed, "head", 0),
    )?;
    let mut opt = Adam::new(cfg.learning_rate());
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.run.epochs);
    let mut best: Option<(f64, Tensors)> = None;

    for epoch in 0..cfg.run.epochs {
        let order = epoch_order(
            &y_train,
            ds.classes.len(),
            cfg.run.balanced_sampler,
            seed,
            epoch,
        );
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(batch_size).enumerate() {
            let mut xb = Array2::zeros((chunk.len(), dim));
            let mut yb = Vec::with_capacity(chunk.len());
            for (row, &idx) in chunk.iter().enumerate() {
                xb.row_mut(row).assign(&x_train.row(idx));
                yb.push(y_train[idx]);
            }
            let (logits, cache) = head.forward(&xb);
            let (loss, dlogits) = ce_loss(&logits, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}, step {step}: loss is {loss}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            let mut grads = Tensors::new();
            head.backward(&xb, &cache, &dlogits, &mut grads);
            opt.step(&mut [(&mut head.params, &grads)]);
        }

        let logits = head_logits(&head, &x_dev)?;
        let preds: Vec<String> = predict_from_logits(&logits)
            .into_iter()
            .map(|p| ds.classes[p].clone())
            .collect();
        let cm = confusion(&preds, &dev_truths, &ds.classes)?;
        let dev_accuracy = micro_accuracy(&cm)?;
        let dev_macro_f1 = macro_f1(&cm)?;
        let value = pick(cfg.run.selection_metric, dev_accuracy, dev_macro_f1);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, head.params.clone()));
        }
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            dev_accuracy,
            dev_macro_f1,
        });
    }

    let best_epoch = select_best(&history, cfg.run.selection_metric.as_str())?;
    let (value, best_params) = best.expect("at least one epoch ran");
    let head = ClassifierHead::from_parts(dim, ds.classes.clone(), hidden, best_params)?;
    let backbone = match provider {
        EmbeddingProvider::Backbone(net) => Some(Box::new((**net).clone())),
        EmbeddingProvider::Fixture(_) => None,
    };
    Ok(Checkpoint {
        task: cfg.task,
        strategy: cfg.strategy,
        config: cfg.clone(),
        class_names: ds.classes,
        selection: SelectionRecord {
            metric: cfg.run.selection_metric.as_str().to_string(),
            epoch: best_epoch,
            value,
        },
        selection_split: ds.selection_split,
        history,
        provenance: provenance_of(manifest, seed),
        model: ModelState::Head { head, backbone },
    })
}
