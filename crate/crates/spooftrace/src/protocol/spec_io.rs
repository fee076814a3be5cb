//! Protocol specs and their TSV serialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, InputType, Task};
use crate::tsv::{self, Sidecar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            other => Err(Error::InvalidInput(format!(
                "unknown partition `{other}` (expected train, dev or eval)"
            ))),
        }
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A complete train/dev/eval assignment plus the choices that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    /// Utterance id → partition, exhaustive over retained utterances.
    pub partition: BTreeMap<String, Partition>,
    /// Task name → class names dropped as degenerate.
    pub removed_classes: BTreeMap<String, Vec<String>>,
    /// Threshold used by the degenerate-class filter, when it ran.
    pub dominance_threshold: Option<f64>,
    pub target_ratios: (f64, f64, f64),
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        self.partition.get(id).copied()
    }

    /// Ids of one partition, in sorted order.
    pub fn ids_in(&self, part: Partition) -> Vec<&str> {
        self.partition
            .iter()
            .filter(|(_, &p)| p == part)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// One row of the emitted protocol file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolRow {
    pub id: String,
    pub partition: Partition,
    pub voice_id: Option<String>,
    pub input_type: InputType,
    pub acoustic_model: String,
    pub vocoder: String,
}

const HEADER: &str = "id\tpartition\tvoice_id\tinput_type\tacoustic_model\tvocoder";

/// Write the protocol TSV plus a `<out>.meta.tsv` sidecar holding the
/// seed, target ratios, dominance threshold and removed-class lists
/// (`-` for an empty list).
pub fn emit_protocol(spec: &ProtocolSpec, manifest: &CorpusManifest, out: &Path) -> Result<()> {
    let mut body = String::from(HEADER);
    body.push('\n');
    for (utt, labels) in manifest.entries() {
        let part = spec.partition_of(&utt.id).ok_or_else(|| {
            Error::InvalidInput(format!("utterance `{}` is missing from the protocol", utt.id))
        })?;
        for (value, what) in [
            (utt.id.as_str(), "id"),
            (utt.voice_id.as_deref().unwrap_or("-"), "voice_id"),
            (labels.acoustic_model.as_str(), "acoustic_model"),
            (labels.vocoder.as_str(), "vocoder"),
        ] {
            tsv::check_field(value, what)?;
        }
        body.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            utt.id,
            part,
            tsv::opt_field(utt.voice_id.as_deref()),
            labels.input_type,
            labels.acoustic_model,
            labels.vocoder,
        ));
    }
    tsv::write_file(out, body)?;

    let mut sidecar = Sidecar::new();
    sidecar.push("seed", spec.seed.to_string());
    sidecar.push(
        "target_ratios",
        format!(
            "{},{},{}",
            spec.target_ratios.0, spec.target_ratios.1, spec.target_ratios.2
        ),
    );
    if let Some(threshold) = spec.dominance_threshold {
        sidecar.push("dominance_threshold", threshold.to_string());
    }
    for task in [Task::InputType, Task::AcousticModel, Task::Vocoder] {
        let empty = Vec::new();
        let removed = spec.removed_classes.get(task.as_str()).unwrap_or(&empty);
        sidecar.push_list(&format!("removed_{task}"), removed);
    }
    sidecar.write(&tsv::sidecar_path(out))
}

/// Read a protocol file and its sidecar back into a spec and its rows.
pub fn read_protocol(path: &Path) -> Result<(ProtocolSpec, Vec<ProtocolRow>)> {
    let text = tsv::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(Error::format(path, "missing or wrong protocol header")),
    }
    let mut rows = Vec::new();
    let mut partition = BTreeMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        }
        let part = Partition::parse(fields[1])
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if partition.insert(fields[0].to_string(), part).is_some() {
            return Err(Error::DuplicateId {
                id: fields[0].to_string(),
            });
        }
        rows.push(ProtocolRow {
            id: fields[0].to_string(),
            partition: part,
            voice_id: tsv::parse_opt(fields[2]),
            input_type: InputType::parse(fields[3])
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
            acoustic_model: fields[4].to_string(),
            vocoder: fields[5].to_string(),
        });
    }

    let sidecar_file = tsv::sidecar_path(path);
    let sc = Sidecar::read(&sidecar_file)?;
    let seed: u64 = sc
        .get("seed")
        .ok_or_else(|| Error::format(&sidecar_file, "missing seed"))?
        .parse()
        .map_err(|_| Error::format(&sidecar_file, "seed is not an integer"))?;
    let ratios_raw = sc
        .get("target_ratios")
        .ok_or_else(|| Error::format(&sidecar_file, "missing target_ratios"))?;
    let parts: Vec<f64> = ratios_raw
        .split(',')
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(&sidecar_file, "target_ratios must be three numbers"))?;
    if parts.len() != 3 {
        return Err(Error::format(&sidecar_file, "target_ratios must be three numbers"));
    }
    let dominance_threshold = match sc.get("dominance_threshold") {
        Some(raw) => Some(raw.parse::<f64>().map_err(|_| {
            Error::format(&sidecar_file, "dominance_threshold is not a number")
        })?),
        None => None,
    };
    let mut removed_classes = BTreeMap::new();
    for task in [Task::InputType, Task::AcousticModel, Task::Vocoder] {
        if let Some(list) = sc.get_list(&format!("removed_{task}")) {
            if !list.is_empty() {
                removed_classes.insert(task.as_str().to_string(), list);
            }
        }
    }
    Ok((
        ProtocolSpec {
            partition,
            removed_classes,
            dominance_threshold,
            target_ratios: (parts[0], parts[1], parts[2]),
            seed,
        },
        rows,
    ))
}
