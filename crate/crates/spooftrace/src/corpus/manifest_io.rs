//! Manifest persistence: a TSV body plus a `<file>.meta.tsv` sidecar.
//!
//! Body columns: id, audio_path, language, source_system,
//! is_bonafide (0/1), native_speaker_id, voice_id, input_type,
//! acoustic_model, vocoder. Optional fields encode as `-`. The sidecar
//! carries `dataset_name` and one `created_from` line per input digest.

use std::path::Path;

use crate::tsv::{self, Sidecar};
use crate::{Error, Result};

use super::types::{AttributeLabelSet, CorpusManifest, InputType, ProvenanceEntry, Utterance};

const HEADER: &str = "id\taudio_path\tlanguage\tsource_system\tis_bonafide\tnative_speaker_id\tvoice_id\tinput_type\tacoustic_model\tvocoder";

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let mut body = String::from(HEADER);
    body.push('\n');
    for (utt, labels) in manifest.entries() {
        for (value, what) in [
            (utt.id.as_str(), "id"),
            (utt.audio_path.as_str(), "audio_path"),
            (utt.language.as_str(), "language"),
            (utt.source_system.as_str(), "source_system"),
            (utt.native_speaker_id.as_deref().unwrap_or("-"), "native_speaker_id"),
            (utt.voice_id.as_deref().unwrap_or("-"), "voice_id"),
            (labels.acoustic_model.as_str(), "acoustic_model"),
            (labels.vocoder.as_str(), "vocoder"),
        ] {
            tsv::check_field(value, what)?;
        }
        body.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            utt.id,
            utt.audio_path,
            utt.language,
            utt.source_system,
            utt.is_bonafide as u8,
            tsv::opt_field(utt.native_speaker_id.as_deref()),
            tsv::opt_field(utt.voice_id.as_deref()),
            labels.input_type,
            labels.acoustic_model,
            labels.vocoder,
        ));
    }
    tsv::write_file(path, body)?;

    let mut sidecar = Sidecar::new();
    sidecar.push("dataset_name", manifest.dataset_name.clone());
    for entry in &manifest.created_from {
        sidecar.push("created_from", format!("{}:{}", entry.sha256, entry.source));
    }
    sidecar.write(&tsv::sidecar_path(path))
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = tsv::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(Error::format(path, "missing or wrong manifest header")),
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 10 columns, found {}", fields.len()),
            ));
        }
        let is_bonafide = match fields[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("is_bonafide must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let utt = Utterance {
            id: fields[0].to_string(),
            audio_path: fields[1].to_string(),
            language: fields[2].to_string(),
            source_system: fields[3].to_string(),
            is_bonafide,
            native_speaker_id: tsv::parse_opt(fields[5]),
            voice_id: tsv::parse_opt(fields[6]),
        };
        let labels = AttributeLabelSet {
            input_type: InputType::parse(fields[7])
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
            acoustic_model: fields[8].to_string(),
            vocoder: fields[9].to_string(),
        };
        entries.push((utt, labels));
    }

    let sidecar_file = tsv::sidecar_path(path);
    let (dataset_name, created_from) = if sidecar_file.exists() {
        let sc = Sidecar::read(&sidecar_file)?;
        let name = sc
            .get("dataset_name")
            .ok_or_else(|| Error::format(&sidecar_file, "missing dataset_name"))?
            .to_string();
        let mut prov = Vec::new();
        for (k, v) in &sc.entries {
            if k == "created_from" {
                let (sha256, source) = v.split_once(':').ok_or_else(|| {
                    Error::format(&sidecar_file, "created_from must be `<sha256>:<source>`")
                })?;
                prov.push(ProvenanceEntry {
                    source: source.to_string(),
                    sha256: sha256.to_string(),
                });
            }
        }
        (name, prov)
    } else {
        (String::from("unnamed"), Vec::new())
    };

    CorpusManifest::new(dataset_name, created_from, entries)
}
