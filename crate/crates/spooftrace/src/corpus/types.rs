//! Core corpus types: utterances, attribute labels, label maps, manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{tsv, Error, Result};

/// Reserved class name shared by all three attributes of genuine speech.
pub const BONAFIDE: &str = "bonafide";

/// What the generation pipeline consumed: text (TTS), speech (VC), or
/// nothing (genuine audio).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InputType {
    Text,
    Speech,
    Bonafide,
}

impl InputType {
    pub fn as_str(self) -> &'static str {
        match self {
            InputType::Text => "text",
            InputType::Speech => "speech",
            InputType::Bonafide => BONAFIDE,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(InputType::Text),
            "speech" => Ok(InputType::Speech),
            BONAFIDE => Ok(InputType::Bonafide),
            other => Err(Error::InvalidInput(format!(
                "unknown input type `{other}` (expected text, speech or bonafide)"
            ))),
        }
    }
}

impl std::fmt::Display for InputType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three per-utterance attribute labels.
///
/// `bonafide` is all-or-nothing: either every field carries the reserved
/// class or none does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeLabelSet {
    pub input_type: InputType,
    pub acoustic_model: String,
    pub vocoder: String,
}

impl AttributeLabelSet {
    pub fn bonafide() -> Self {
        AttributeLabelSet {
            input_type: InputType::Bonafide,
            acoustic_model: BONAFIDE.to_string(),
            vocoder: BONAFIDE.to_string(),
        }
    }

    pub fn is_bonafide(&self) -> bool {
        self.input_type == InputType::Bonafide
    }

    pub fn validate(&self) -> Result<()> {
        if self.acoustic_model.is_empty() || self.vocoder.is_empty() {
            return Err(Error::InvalidInput(
                "attribute class strings must be non-empty".into(),
            ));
        }
        let marks = [
            self.input_type == InputType::Bonafide,
            self.acoustic_model == BONAFIDE,
            self.vocoder == BONAFIDE,
        ];
        if marks.iter().any(|&m| m) && !marks.iter().all(|&m| m) {
            return Err(Error::InvalidInput(format!(
                "inconsistent bonafide labels: ({}, {}, {})",
                self.input_type, self.acoustic_model, self.vocoder
            )));
        }
        Ok(())
    }
}

/// One audio item with its provenance fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: String,
    /// BCP-47-like code, `und` when unknown.
    pub language: String,
    /// Attack id (`A07`) or system name (`xtts_v2`); `bonafide` for
    /// genuine audio.
    pub source_system: String,
    pub is_bonafide: bool,
    pub native_speaker_id: Option<String>,
    /// Assigned later by voice clustering; `None` until then.
    pub voice_id: Option<String>,
}

impl Utterance {
    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("utterance id must be non-empty".into()));
        }
        if self.audio_path.is_empty() {
            return Err(Error::InvalidInput(format!(
                "utterance `{}` has an empty audio path",
                self.id
            )));
        }
        if self.is_bonafide && self.source_system != BONAFIDE {
            return Err(Error::InvalidInput(format!(
                "bonafide utterance `{}` has source_system `{}`",
                self.id, self.source_system
            )));
        }
        Ok(())
    }
}

/// Classification tasks supported downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Two classes: bonafide vs spoof.
    Binary,
    InputType,
    AcousticModel,
    Vocoder,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::InputType => "input_type",
            Task::AcousticModel => "acoustic_model",
            Task::Vocoder => "vocoder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "input_type" => Ok(Task::InputType),
            "acoustic_model" => Ok(Task::AcousticModel),
            "vocoder" => Ok(Task::Vocoder),
            other => Err(Error::InvalidInput(format!(
                "unknown task `{other}` (expected binary, input_type, acoustic_model or vocoder)"
            ))),
        }
    }

    /// Class label of one manifest entry under this task.
    pub fn label_of(self, utt: &Utterance, labels: &AttributeLabelSet) -> String {
        match self {
            Task::Binary => {
                if utt.is_bonafide {
                    BONAFIDE.to_string()
                } else {
                    "spoof".to_string()
                }
            }
            Task::InputType => labels.input_type.as_str().to_string(),
            Task::AcousticModel => labels.acoustic_model.clone(),
            Task::Vocoder => labels.vocoder.clone(),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMapEntryFile {
    input_type: String,
    acoustic_model: String,
    vocoder: String,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMapFile {
    systems: BTreeMap<String, LabelMapEntryFile>,
}

/// System-name → attribute-label mapping, loaded from an editable config.
///
/// Lookups are case-insensitive and also try the final path component of
/// slash-separated system ids, so catalogue names like
/// `tts_models/en/ljspeech/vits` resolve through a `vits` entry.
#[derive(Debug, Clone)]
pub struct LabelMap {
    entries: BTreeMap<String, (AttributeLabelSet, Option<String>)>,
}

impl LabelMap {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: LabelMapFile = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("label map: {e}")))?;
        let mut entries = BTreeMap::new();
        for (name, entry) in file.systems {
            let labels = AttributeLabelSet {
                input_type: InputType::parse(&entry.input_type)?,
                acoustic_model: entry.acoustic_model,
                vocoder: entry.vocoder,
            };
            labels.validate()?;
            let key = name.to_ascii_lowercase();
            if entries.insert(key, (labels, entry.note)).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "label map has duplicate system `{name}` (names are case-insensitive)"
                )));
            }
        }
        Ok(LabelMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&tsv::read_to_string(path)?)
    }

    pub fn lookup(&self, system: &str) -> Option<&AttributeLabelSet> {
        let key = system.to_ascii_lowercase();
        if let Some((labels, _)) = self.entries.get(&key) {
            return Some(labels);
        }
        let tail = key.rsplit('/').next()?;
        self.entries.get(tail).map(|(labels, _)| labels)
    }

    pub fn note(&self, system: &str) -> Option<&str> {
        self.entries
            .get(&system.to_ascii_lowercase())
            .and_then(|(_, note)| note.as_deref())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Digest record tying a manifest to the files it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub source: String,
    pub sha256: String,
}

/// An immutable list of labeled utterances plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub dataset_name: String,
    pub created_from: Vec<ProvenanceEntry>,
    entries: Vec<(Utterance, AttributeLabelSet)>,
}

impl CorpusManifest {
    /// Validates ids, paths and label invariants before sealing the list.
    pub fn new(
        dataset_name: impl Into<String>,
        created_from: Vec<ProvenanceEntry>,
        entries: Vec<(Utterance, AttributeLabelSet)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (utt, labels) in &entries {
            utt.validate()?;
            labels.validate()?;
            if utt.is_bonafide != labels.is_bonafide() {
                return Err(Error::InvalidInput(format!(
                    "utterance `{}`: is_bonafide flag disagrees with labels",
                    utt.id
                )));
            }
            if !seen.insert(utt.id.clone()) {
                return Err(Error::DuplicateId {
                    id: utt.id.clone(),
                });
            }
        }
        Ok(CorpusManifest {
            dataset_name: dataset_name.into(),
            created_from,
            entries,
        })
    }

    pub fn entries(&self) -> &[(Utterance, AttributeLabelSet)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&(Utterance, AttributeLabelSet)> {
        self.entries.iter().find(|(u, _)| u.id == id)
    }

    /// Copy of this manifest with per-utterance voice ids replaced.
    pub fn with_voice_ids(&self, ids: &BTreeMap<String, String>) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|(utt, labels)| {
                let mut utt = utt.clone();
                utt.voice_id = ids.get(&utt.id).cloned().or(utt.voice_id);
                (utt, labels.clone())
            })
            .collect();
        CorpusManifest::new(self.dataset_name.clone(), self.created_from.clone(), entries)
    }

    /// Copy containing only the entries whose id satisfies `keep`.
    pub fn retain(&self, keep: impl Fn(&Utterance, &AttributeLabelSet) -> bool) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .filter(|(u, l)| keep(u, l))
            .cloned()
            .collect();
        CorpusManifest::new(self.dataset_name.clone(), self.created_from.clone(), entries)
    }

    /// Distinct class labels under `task`, bonafide first, then sorted.
    pub fn classes(&self, task: Task) -> Vec<String> {
        let mut set: BTreeSet<String> = self
            .entries
            .iter()
            .map(|(u, l)| task.label_of(u, l))
            .collect();
        let mut out = Vec::new();
        if set.remove(BONAFIDE) {
            out.push(BONAFIDE.to_string());
        }
        out.extend(set);
        out
    }
}
