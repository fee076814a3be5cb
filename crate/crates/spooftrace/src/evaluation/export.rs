//! Embedding export: one split of a corpus pushed through a provider
//! and written as an "EMB1" file plus a label sidecar for plotting.

use std::path::Path;

use crate::corpus::{CorpusManifest, Task};
use crate::frontend::FeaturePipeline;
use crate::models::EmbeddingProvider;
use crate::protocol::{write_embeddings, EmbeddingSet, Partition, ProtocolSpec};
use crate::tsv;
use crate::{Error, Result};

/// Embed every manifest entry assigned to `partition` and write the
/// vectors to `out_emb` with a TSV of per-utterance labels next to them.
/// Entries are processed in id order, so output is deterministic.
/// Returns the number of exported utterances.
pub fn export_embeddings(
    provider: &EmbeddingProvider,
    manifest: &CorpusManifest,
    spec: &ProtocolSpec,
    partition: Partition,
    pipeline: &FeaturePipeline,
    out_emb: &Path,
    out_labels: &Path,
) -> Result<usize> {
    let mut picked: Vec<&(crate::corpus::Utterance, crate::corpus::AttributeLabelSet)> = manifest
        .entries()
        .iter()
        .filter(|(u, _)| spec.partition_of(&u.id) == Some(partition))
        .collect();
    picked.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    if picked.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no manifest entries in the {partition} split"
        )));
    }

    let mut set = EmbeddingSet::new(provider.dim())?;
    let mut labels = String::from("id\tpartition\tinput_type\tacoustic_model\tvocoder\n");
    for (utt, label_set) in picked.iter() {
        let path = Path::new(&utt.audio_path);
        let vector = provider.embed(&utt.id, || pipeline.eval_features(path))?;
        set.insert(utt.id.clone(), vector)?;
        labels.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            utt.id,
            partition,
            label_set.input_type,
            Task::AcousticModel.label_of(utt, label_set),
            Task::Vocoder.label_of(utt, label_set),
        ));
    }
    write_embeddings(out_emb, &set)?;
    tsv::write_file(out_labels, labels)?;
    Ok(set.len())
}
