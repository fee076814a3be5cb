//! Joining a manifest with a protocol into labeled train/dev item lists.

use std::collections::BTreeMap;

use crate::corpus::{CorpusManifest, Task};
use crate::protocol::{Partition, ProtocolSpec};
use crate::{Error, Result};

/// One trainable utterance: where its audio lives and which class index
/// it carries under the dataset's task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataItem {
    pub id: String,
    pub path: String,
    pub label: usize,
}

/// Resolved training data for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDataset {
    /// Class names in label-index order (bonafide first when present).
    pub classes: Vec<String>,
    pub train: Vec<DataItem>,
    pub dev: Vec<DataItem>,
    /// Which protocol partition serves as the selection split: "dev"
    /// normally, "eval" for two-way protocols without a dev partition.
    pub selection_split: String,
}

/// Join `manifest` and `spec` under `task`.
///
/// Manifest entries outside the protocol are skipped; protocol ids
/// missing from the manifest are an error. The selection split falls
/// back to the eval partition when the protocol has no dev entries.
/// Every class must appear in the train split.
pub fn assemble(manifest: &CorpusManifest, spec: &ProtocolSpec, task: Task) -> Result<TaskDataset> {
    let by_id: BTreeMap<&str, usize> = manifest
        .entries()
        .iter()
        .enumerate()
        .map(|(i, (u, _))| (u.id.as_str(), i))
        .collect();
    for id in spec.partition.keys() {
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "protocol lists `{id}` but the manifest does not contain it"
            )));
        }
    }

    // Class vocabulary from the protocol-covered entries, in the
    // manifest's bonafide-first order. The binary vocabulary is fixed by
    // definition, so a one-sided corpus still trips the per-class check.
    let covered = manifest.retain(|u, _| spec.partition_of(&u.id).is_some())?;
    if covered.is_empty() {
        return Err(Error::InvalidInput(
            "protocol and manifest share no utterances".into(),
        ));
    }
    let classes = if task == Task::Binary {
        vec![crate::corpus::BONAFIDE.to_string(), "spoof".to_string()]
    } else {
        covered.classes(task)
    };
    let class_index: BTreeMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let selection_partition = if spec.ids_in(Partition::Dev).is_empty() {
        Partition::Eval
    } else {
        Partition::Dev
    };

    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (utt, labels) in covered.entries() {
        let part = spec
            .partition_of(&utt.id)
            .expect("covered manifest only holds protocol entries");
        let label = class_index[task.label_of(utt, labels).as_str()];
        let item = DataItem {
            id: utt.id.clone(),
            path: utt.audio_path.clone(),
            label,
        };
        if part == Partition::Train {
            train.push(item);
        } else if part == selection_partition {
            dev.push(item);
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidInput(format!(
            "selection split ({selection_partition}) is empty"
        )));
    }
    for (i, class) in classes.iter().enumerate() {
        if !train.iter().any(|item| item.label == i) {
            return Err(Error::InvalidInput(format!(
                "class `{class}` has no training samples"
            )));
        }
    }
    Ok(TaskDataset {
        classes,
        train,
        dev,
        selection_split: selection_partition.as_str().to_string(),
    })
}
