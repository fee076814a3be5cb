//! The training artifact: trained model state plus everything needed to
//! interpret it, in a single checkpoint file and a run directory layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayD, Ix2};
use serde::{Deserialize, Serialize};

use super::config::{Strategy, TrainConfig};
use super::run::{EpochMetrics, SelectionRecord};
use crate::corpus::{ProvenanceEntry, Task};
use crate::frontend::FeatureMatrix;
use crate::models::nn::Tensors;
use crate::models::{
    head_logits, lmcl_inference_logits, predict_from_logits, read_checkpoint, softmax,
    write_checkpoint, Backbone, ClassifierHead,
};
use crate::protocol::EmbeddingSet;
use crate::{Error, Result};

/// Where a run's data came from, for reproducibility audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub dataset_name: String,
    pub created_from: Vec<ProvenanceEntry>,
    pub seed: u64,
}

/// Trained parameters in their strategy-specific shape.
#[derive(Debug)]
pub enum ModelState {
    /// Jointly trained backbone plus margin-loss class weights.
    E2e {
        backbone: Backbone,
        lmcl_w: Array2<f64>,
    },
    /// Classifier head; the frozen backbone is carried along when the
    /// embeddings came from one, absent for fixture embeddings.
    Head {
        head: ClassifierHead,
        backbone: Option<Box<Backbone>>,
    },
}

/// Best-epoch model state with its config snapshot and training record.
#[derive(Debug)]
pub struct Checkpoint {
    pub task: Task,
    pub strategy: Strategy,
    pub config: TrainConfig,
    pub class_names: Vec<String>,
    pub history: Vec<EpochMetrics>,
    pub selection: SelectionRecord,
    /// Which protocol partition selection ran on ("dev" or "eval").
    pub selection_split: String,
    pub provenance: RunProvenance,
    pub model: ModelState,
}

impl Checkpoint {
    /// Class scores for one utterance: `(predicted class, probabilities)`.
    ///
    /// `features` is only invoked when the checkpoint contains a network;
    /// fixture-trained heads look the id up in `fixture` instead.
    pub fn predict(
        &self,
        id: &str,
        features: impl FnOnce() -> Result<FeatureMatrix>,
        fixture: Option<&EmbeddingSet>,
    ) -> Result<(String, Vec<f64>)> {
        let logits = match &self.model {
            ModelState::E2e { backbone, lmcl_w } => {
                let emb = backbone.embed(&features()?)?;
                let emb = Array2::from_shape_vec((1, emb.len()), emb)
                    .expect("1×D shape always matches D values");
                lmcl_inference_logits(&emb, lmcl_w, self.config.run.lmcl.scale)?
            }
            ModelState::Head { head, backbone } => {
                let emb = match backbone {
                    Some(net) => net.embed(&features()?)?,
                    None => fixture
                        .ok_or_else(|| {
                            Error::InvalidInput(
                                "this checkpoint scores precomputed embeddings; supply an embedding file"
                                    .into(),
                            )
                        })?
                        .get(id)
                        .map(<[f64]>::to_vec)
                        .ok_or_else(|| {
                            Error::InvalidInput(format!("no stored embedding for utterance `{id}`"))
                        })?,
                };
                let emb = Array2::from_shape_vec((1, emb.len()), emb)
                    .expect("1×D shape always matches D values");
                head_logits(head, &emb)?
            }
        };
        let idx = predict_from_logits(&logits)[0];
        let probs = softmax(&logits).row(0).to_vec();
        Ok((self.class_names[idx].clone(), probs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = serde_json::json!({
            "task": self.task,
            "strategy": self.strategy,
            "config": self.config,
            "class_names": self.class_names,
            "history": self.history,
            "selection": self.selection,
            "selection_split": self.selection_split,
            "provenance": self.provenance,
        });
        let obj = meta.as_object_mut().expect("literal is an object");

        let mut owned: Vec<(String, ArrayD<f64>)> = Vec::new();
        match &self.model {
            ModelState::E2e { backbone, lmcl_w } => {
                obj.insert("model_kind".into(), "e2e".into());
                for (name, arr) in backbone.params.iter() {
                    owned.push((format!("backbone.param.{name}"), arr.clone()));
                }
                for (name, arr) in backbone.buffers.iter() {
                    owned.push((format!("backbone.buffer.{name}"), arr.clone()));
                }
                owned.push(("lmcl.w".into(), lmcl_w.clone().into_dyn()));
            }
            ModelState::Head { head, backbone } => {
                obj.insert("model_kind".into(), "head".into());
                obj.insert("head_in_dim".into(), head.in_dim().into());
                obj.insert("head_hidden".into(), head.hidden_dim().into());
                for (name, arr) in head.params.iter() {
                    owned.push((format!("head.param.{name}"), arr.clone()));
                }
                if let Some(net) = backbone {
                    for (name, arr) in net.params.iter() {
                        owned.push((format!("backbone.param.{name}"), arr.clone()));
                    }
                    for (name, arr) in net.buffers.iter() {
                        owned.push((format!("backbone.buffer.{name}"), arr.clone()));
                    }
                }
            }
        }
        let refs: Vec<(String, &ArrayD<f64>)> =
            owned.iter().map(|(n, a)| (n.clone(), a)).collect();
        write_checkpoint(path, &meta, &refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, arrays) = read_checkpoint(path)?;
        let field = |key: &str| -> Result<&serde_json::Value> {
            meta.get(key)
                .ok_or_else(|| Error::format(path, format!("checkpoint lacks `{key}`")))
        };
        let task: Task = serde_json::from_value(field("task")?.clone())
            .map_err(|e| Error::format(path, format!("task: {e}")))?;
        let strategy: Strategy = serde_json::from_value(field("strategy")?.clone())
            .map_err(|e| Error::format(path, format!("strategy: {e}")))?;
        let config: TrainConfig = serde_json::from_value(field("config")?.clone())
            .map_err(|e| Error::format(path, format!("config: {e}")))?;
        let class_names: Vec<String> = serde_json::from_value(field("class_names")?.clone())
            .map_err(|e| Error::format(path, format!("class_names: {e}")))?;
        let history: Vec<EpochMetrics> = serde_json::from_value(field("history")?.clone())
            .map_err(|e| Error::format(path, format!("history: {e}")))?;
        let selection: SelectionRecord = serde_json::from_value(field("selection")?.clone())
            .map_err(|e| Error::format(path, format!("selection: {e}")))?;
        let selection_split: String = serde_json::from_value(field("selection_split")?.clone())
            .map_err(|e| Error::format(path, format!("selection_split: {e}")))?;
        let provenance: RunProvenance = serde_json::from_value(field("provenance")?.clone())
            .map_err(|e| Error::format(path, format!("provenance: {e}")))?;
        let model_kind = field("model_kind")?
            .as_str()
            .ok_or_else(|| Error::format(path, "model_kind must be a string"))?
            .to_string();

        let mut head_params = Tensors::new();
        let mut bb_params = Tensors::new();
        let mut bb_buffers = Tensors::new();
        let mut lmcl_w: Option<Array2<f64>> = None;
        for (name, arr) in arrays {
            if let Some(rest) = name.strip_prefix("backbone.param.") {
                bb_params.insert(rest, arr);
            } else if let Some(rest) = name.strip_prefix("backbone.buffer.") {
                bb_buffers.insert(rest, arr);
            } else if let Some(rest) = name.strip_prefix("head.param.") {
                head_params.insert(rest, arr);
            } else if name == "lmcl.w" {
                lmcl_w = Some(
                    arr.into_dimensionality::<Ix2>()
                        .map_err(|_| Error::format(path, "lmcl.w is not a matrix"))?,
                );
            } else {
                return Err(Error::format(path, format!("unexpected tensor `{name}`")));
            }
        }

        let model = match model_kind.as_str() {
            "e2e" => {
                let backbone =
                    Backbone::from_parts(config.run.backbone.clone(), bb_params, bb_buffers)?;
                let w = lmcl_w.ok_or_else(|| Error::format(path, "checkpoint lacks lmcl.w"))?;
                if w.dim() != (class_names.len(), backbone.embed_dim()) {
                    return Err(Error::format(
                        path,
                        format!(
                            "lmcl.w has shape {:?}, expected [{}, {}]",
                            w.dim(),
                            class_names.len(),
                            backbone.embed_dim()
                        ),
                    ));
                }
                ModelState::E2e {
                    backbone,
                    lmcl_w: w,
                }
            }
            "head" => {
                let in_dim = field("head_in_dim")?
                    .as_u64()
                    .ok_or_else(|| Error::format(path, "head_in_dim must be an integer"))?
                    as usize;
                let hidden: Option<usize> =
                    serde_json::from_value(field("head_hidden")?.clone())
                        .map_err(|e| Error::format(path, format!("head_hidden: {e}")))?;
                let head =
                    ClassifierHead::from_parts(in_dim, class_names.clone(), hidden, head_params)?;
                let backbone = if bb_params.is_empty() {
                    None
                } else {
                    Some(Box::new(Backbone::from_parts(
                        config.run.backbone.clone(),
                        bb_params,
                        bb_buffers,
                    )?))
                };
                ModelState::Head { head, backbone }
            }
            other => {
                return Err(Error::format(path, format!("unknown model_kind `{other}`")));
            }
        };
        Ok(Checkpoint {
            task,
            strategy,
            config,
            class_names,
            history,
            selection,
            selection_split,
            provenance,
            model,
        })
    }
}

/// Create `base` as a new directory, or `base-1`, `base-2`, … if taken.
/// Never reuses an existing directory; fails after 99 suffixes.
pub fn fresh_run_dir(base: &Path) -> Result<PathBuf> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    for i in 0..100 {
        let candidate = if i == 0 {
            base.to_path_buf()
        } else {
            let mut name = base.as_os_str().to_os_string();
            name.push(format!("-{i}"));
            PathBuf::from(name)
        };
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&candidate, e)),
        }
    }
    Err(Error::InvalidInput(format!(
        "{} and 99 suffixed variants already exist",
        base.display()
    )))
}

/// Write the standard run-directory layout: `model.ckpt`, `history.tsv`
/// (epoch, train loss, dev metrics), and `provenance.json`.
pub fn write_run_dir(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    ckpt.save(&dir.join("model.ckpt"))?;

    let mut tsv = String::from("epoch\ttrain_loss\tdev_accuracy\tdev_macro_f1\n");
    for m in &ckpt.history {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.epoch, m.train_loss, m.dev_accuracy, m.dev_macro_f1
        ));
    }
    crate::tsv::write_file(&dir.join("history.tsv"), tsv)?;

    let mut record = BTreeMap::new();
    record.insert("task", serde_json::json!(ckpt.task));
    record.insert("strategy", serde_json::json!(ckpt.strategy));
    record.insert("class_names", serde_json::json!(ckpt.class_names));
    record.insert("selection", serde_json::json!(ckpt.selection));
    record.insert("selection_split", serde_json::json!(ckpt.selection_split));
    record.insert("provenance", serde_json::json!(ckpt.provenance));
    let json = serde_json::to_string_pretty(&record).expect("provenance serializes");
    crate::tsv::write_file(&dir.join("provenance.json"), format!("{json}\n"))?;
    Ok(())
}
