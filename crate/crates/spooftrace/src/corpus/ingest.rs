//! Ingestors for the two supported metadata styles.

use std::collections::BTreeSet;
use std::path::Path;

use crate::digest::sha256_hex_file;
use crate::{tsv, Error, Result};

use super::types::{
    AttributeLabelSet, CorpusManifest, LabelMap, ProvenanceEntry, Utterance, BONAFIDE,
};

/// Which published split a protocol file describes; recorded in the
/// manifest name only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionTag {
    Train,
    Eval,
}

impl PartitionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionTag::Train => "train",
            PartitionTag::Eval => "eval",
        }
    }
}

/// Ingest an ASVspoof-style protocol file.
///
/// Lines read `speaker utt_id - attack_id key` with whitespace separation;
/// `key` is `bonafide` or `spoof`. Audio paths are formed as
/// `<audio_root>/<utt_id>.flac`. Spoofed lines resolve their labels through
/// `label_map` keyed by attack id; every attack id must be covered.
pub fn ingest_asvspoof(
    protocol_file: &Path,
    audio_root: &Path,
    label_map: &LabelMap,
    tag: PartitionTag,
) -> Result<CorpusManifest> {
    let text = tsv::read_to_string(protocol_file)?;
    let mut entries = Vec::new();
    let mut unknown = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                protocol_file,
                i + 1,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let (speaker, utt_id, _, attack_id, key) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        let audio_path = audio_root.join(format!("{utt_id}.flac"));
        let (labels, is_bonafide, source_system, native) = match key {
            BONAFIDE => (
                AttributeLabelSet::bonafide(),
                true,
                BONAFIDE.to_string(),
                Some(speaker.to_string()),
            ),
            "spoof" => {
                let Some(labels) = label_map.lookup(attack_id) else {
                    unknown.insert(attack_id.to_string());
                    continue;
                };
                (labels.clone(), false, attack_id.to_string(), None)
            }
            other => {
                return Err(Error::parse(
                    protocol_file,
                    i + 1,
                    format!("key must be bonafide or spoof, found `{other}`"),
                ))
            }
        };
        entries.push((
            Utterance {
                id: utt_id.to_string(),
                audio_path: audio_path.display().to_string(),
                language: "en".to_string(),
                source_system,
                is_bonafide,
                native_speaker_id: native,
                voice_id: None,
            },
            labels,
        ));
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownSystem {
            names: unknown.into_iter().collect(),
        });
    }
    CorpusManifest::new(
        format!("asvspoof2019la_{}", tag.as_str()),
        vec![ProvenanceEntry {
            source: protocol_file.display().to_string(),
            sha256: sha256_hex_file(protocol_file)?,
        }],
        entries,
    )
}

/// Ingest an MLAAD-style metadata table plus a bonafide speaker index.
///
/// The table delimiter (tab, `|` or `,`) is sniffed from the header; the
/// `path`, `language` and `model_name` columns are located by name. Model
/// names resolve through `label_map` (case-insensitive, catalogue-path
/// tails allowed), so variants grouped in the map collapse to one class.
/// The bonafide index needs `path`, `speaker` and `language` columns.
pub fn ingest_mlaad(
    meta_table: &Path,
    bonafide_index: &Path,
    label_map: &LabelMap,
) -> Result<CorpusManifest> {
    let mut entries = Vec::new();

    let meta = Table::load(meta_table, &["path", "language", "model_name"])?;
    let mut unknown = BTreeSet::new();
    for row in 0..meta.n_rows() {
        let path = meta.get(row, "path");
        let language = meta.get(row, "language");
        let model_name = meta.get(row, "model_name");
        let Some(labels) = label_map.lookup(model_name) else {
            unknown.insert(model_name.to_string());
            continue;
        };
        entries.push((
            Utterance {
                id: path.to_string(),
                audio_path: path.to_string(),
                language: if language.is_empty() {
                    "und".to_string()
                } else {
                    language.to_string()
                },
                source_system: model_name.to_string(),
                is_bonafide: false,
                native_speaker_id: None,
                voice_id: None,
            },
            labels.clone(),
        ));
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownSystem {
            names: unknown.into_iter().collect(),
        });
    }

    let bona = Table::load(bonafide_index, &["path", "speaker", "language"])?;
    for row in 0..bona.n_rows() {
        let path = bona.get(row, "path");
        entries.push((
            Utterance {
                id: path.to_string(),
                audio_path: path.to_string(),
                language: bona.get(row, "language").to_string(),
                source_system: BONAFIDE.to_string(),
                is_bonafide: true,
                native_speaker_id: Some(bona.get(row, "speaker").to_string()),
                voice_id: None,
            },
            AttributeLabelSet::bonafide(),
        ));
    }

    CorpusManifest::new(
        "mlaad",
        vec![
            ProvenanceEntry {
                source: meta_table.display().to_string(),
                sha256: sha256_hex_file(meta_table)?,
            },
            ProvenanceEntry {
                source: bonafide_index.display().to_string(),
                sha256: sha256_hex_file(bonafide_index)?,
            },
        ],
        entries,
    )
}

/// A delimited table addressed by column name.
struct Table {
    columns: Vec<usize>,
    names: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn load(path: &Path, required: &[&str]) -> Result<Self> {
        let text = tsv::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty table"))?;
        let delim = sniff_delimiter(header, required).ok_or_else(|| {
            Error::format(
                path,
                format!("header does not provide columns {}", required.join(", ")),
            )
        })?;
        let header_fields = split_row(header, delim);
        let columns: Vec<usize> = required
            .iter()
            .map(|name| {
                header_fields
                    .iter()
                    .position(|h| h.trim().eq_ignore_ascii_case(name))
                    .expect("sniffed delimiter guarantees required columns")
            })
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields = split_row(line, delim);
            if fields.len() != header_fields.len() {
                return Err(Error::parse(
                    path,
                    i + 2,
                    format!(
                        "expected {} fields, found {}",
                        header_fields.len(),
                        fields.len()
                    ),
                ));
            }
            rows.push(fields);
        }
        Ok(Table {
            columns,
            names: required.iter().map(|s| s.to_string()).collect(),
            rows,
        })
    }

    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn get(&self, row: usize, column: &str) -> &str {
        let idx = self
            .names
            .iter()
            .position(|n| n == column)
            .expect("column registered at load");
        self.rows[row][self.columns[idx]].trim()
    }
}

fn sniff_delimiter(header: &str, required: &[&str]) -> Option<char> {
    ['\t', '|', ','].into_iter().find(|&delim| {
        let fields = split_row(header, delim);
        required.iter().all(|name| {
            fields
                .iter()
                .any(|h| h.trim().eq_ignore_ascii_case(name))
        })
    })
}

/// Split one row on `delim`, honoring double-quoted fields so embedded
/// delimiters survive.
fn split_row(line: &str, delim: char) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    current.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            } else {
                current.push(c);
            }
        } else if c == '"' && current.is_empty() {
            in_quotes = true;
        } else if c == delim {
            fields.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    fields.push(current);
    fields
}
