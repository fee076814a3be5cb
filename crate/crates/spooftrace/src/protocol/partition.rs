//! Voice assignment and speaker-disjoint partitioning.

use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::{CorpusManifest, Task};
use crate::{seeds, Error, Result};

use super::kmeans::VoiceClustering;
use super::spec_io::{Partition, ProtocolSpec};

/// Stamp voice ids onto a manifest: spoofed utterances get
/// `cluster:<index>` from the clustering, bonafide ones reuse their
/// native speaker as `spk:<id>`.
pub fn assign_voice_ids(
    manifest: &CorpusManifest,
    clustering: &VoiceClustering,
) -> Result<CorpusManifest> {
    let mut ids = BTreeMap::new();
    for (utt, _) in manifest.entries() {
        let voice = if utt.is_bonafide {
            let spk = utt.native_speaker_id.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "bonafide utterance `{}` has no native speaker id",
                    utt.id
                ))
            })?;
            format!("spk:{spk}")
        } else {
            let cluster = clustering.assignment.get(&utt.id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "spoofed utterance `{}` is missing from the clustering",
                    utt.id
                ))
            })?;
            format!("cluster:{cluster}")
        };
        ids.insert(utt.id.clone(), voice);
    }
    manifest.with_voice_ids(&ids)
}

/// Assign whole voice groups to train/dev/eval.
///
/// Groups are placed largest-first (voice id breaking size ties) into the
/// partition with the greatest remaining deficit against its target count;
/// deficit ties are resolved by a seeded draw. The achieved fractions land
/// within `max(5 percentage points, largest group share)` of the targets.
pub fn partition_disjoint(
    manifest: &CorpusManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<ProtocolSpec> {
    let (r_train, r_dev, r_eval) = ratios;
    if !(r_train > 0.0 && r_dev > 0.0 && r_eval > 0.0) {
        return Err(Error::InvalidInput("ratios must be positive".into()));
    }
    if (r_train + r_dev + r_eval - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "ratios must sum to 1, got {}",
            r_train + r_dev + r_eval
        )));
    }

    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (utt, _) in manifest.entries() {
        let voice = utt.voice_id.as_deref().ok_or_else(|| {
            Error::InvalidInput(format!("utterance `{}` has no voice id", utt.id))
        })?;
        groups.entry(voice).or_default().push(&utt.id);
    }
    if groups.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 voice groups to fill 3 partitions, found {}",
            groups.len()
        )));
    }

    // Largest group first; equal sizes ordered by voice id.
    let mut ordered: Vec<(&str, &Vec<&str>)> = groups.iter().map(|(v, g)| (*v, g)).collect();
    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

    let total = manifest.len() as f64;
    let targets = [r_train * total, r_dev * total, r_eval * total];
    let mut filled = [0.0f64; 3];
    let mut rng = seeds::rng(seed, "partition", 0);
    let mut partition = BTreeMap::new();
    for (_, members) in &ordered {
        let deficits: Vec<f64> = (0..3).map(|p| targets[p] - filled[p]).collect();
        let best = deficits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..3).filter(|&p| deficits[p] >= best - 1e-12).collect();
        let choice = tied[rng.random_range(0..tied.len())];
        filled[choice] += members.len() as f64;
        for id in *members {
            partition.insert(id.to_string(), Partition::ALL[choice]);
        }
    }

    let largest_share = ordered[0].1.len() as f64 / total;
    let slack = (0.05f64).max(largest_share);
    for p in 0..3 {
        let achieved = filled[p] / total;
        let target = targets[p] / total;
        if (achieved - target).abs() > slack + 1e-12 {
            return Err(Error::Diverged(format!(
                "partition {} reached {achieved:.3} against target {target:.3} (slack {slack:.3})",
                Partition::ALL[p]
            )));
        }
    }

    Ok(ProtocolSpec {
        partition,
        removed_classes: BTreeMap::new(),
        dominance_threshold: None,
        target_ratios: ratios,
        seed,
    })
}

/// Drop spoof classes dominated by a single voice cluster.
///
/// A class is degenerate when its largest cluster holds strictly more than
/// `dominance_threshold` of its samples: such a class is inseparable from
/// voice identity, so a voice-disjoint split starves train or eval.
/// Returns the filtered manifest and the removed class names, sorted.
pub fn filter_degenerate(
    manifest: &CorpusManifest,
    clustering: &VoiceClustering,
    task: Task,
    dominance_threshold: f64,
) -> Result<(CorpusManifest, Vec<String>)> {
    if !(dominance_threshold > 0.0 && dominance_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "dominance threshold must lie in (0, 1], got {dominance_threshold}"
        )));
    }
    let mut per_class: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for (utt, labels) in manifest.entries() {
        if utt.is_bonafide {
            continue;
        }
        let cluster = clustering.assignment.get(&utt.id).ok_or_else(|| {
            Error::InvalidInput(format!(
                "spoofed utterance `{}` is missing from the clustering",
                utt.id
            ))
        })?;
        *per_class
            .entry(task.label_of(utt, labels))
            .or_default()
            .entry(*cluster)
            .or_default() += 1;
    }
    let mut removed = Vec::new();
    for (class, clusters) in &per_class {
        let total: usize = clusters.values().sum();
        let largest = clusters.values().copied().max().unwrap_or(0);
        if largest as f64 > dominance_threshold * total as f64 {
            removed.push(class.clone());
        }
    }
    let filtered = manifest.retain(|utt, labels| {
        utt.is_bonafide || !removed.contains(&task.label_of(utt, labels))
    })?;
    Ok((filtered, removed))
}
