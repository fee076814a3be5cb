//! Small helpers for the tab-separated formats used across the toolkit.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Reject field values that would corrupt a TSV row.
pub fn check_field(value: &str, what: &str) -> Result<()> {
    if value.contains('\t') || value.contains('\n') || value.contains('\r') {
        return Err(Error::InvalidInput(format!(
            "{what} `{value}` contains a tab or newline"
        )));
    }
    Ok(())
}

/// Encode an optional field, `-` standing for absent.
pub fn opt_field(value: Option<&str>) -> &str {
    value.unwrap_or("-")
}

/// Decode an optional field, `-` standing for absent.
pub fn parse_opt(value: &str) -> Option<String> {
    if value == "-" {
        None
    } else {
        Some(value.to_string())
    }
}

/// Read a whole file into a string with a path-annotated error.
pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write bytes with a path-annotated error, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Key/value sidecar document: one `key\tvalue` line per entry, in input
/// order. Empty lists are encoded as `-`.
pub struct Sidecar {
    pub entries: Vec<(String, String)>,
}

impl Sidecar {
    pub fn new() -> Self {
        Sidecar {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn push_list(&mut self, key: &str, items: &[String]) {
        let value = if items.is_empty() {
            "-".to_string()
        } else {
            items.join(",")
        };
        self.entries.push((key.to_string(), value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            if v == "-" {
                Vec::new()
            } else {
                v.split(',').map(str::to_string).collect()
            }
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('\t');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| {
                Error::parse(path, i + 1, "expected `key<TAB>value`")
            })?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Sidecar { entries })
    }
}

/// Conventional sidecar path: `<file>.meta.tsv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.tsv");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_round_trip() {
        let mut sc = Sidecar::new();
        sc.push("seed", "42");
        sc.push_list("removed", &["a".into(), "b".into()]);
        sc.push_list("empty", &[]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.meta.tsv");
        sc.write(&path).unwrap();
        let back = Sidecar::read(&path).unwrap();
        assert_eq!(back.get("seed"), Some("42"));
        assert_eq!(back.get_list("removed").unwrap(), vec!["a", "b"]);
        assert_eq!(back.get_list("empty").unwrap(), Vec::<String>::new());
        assert_eq!(back.get("missing"), None);
    }

    #[test]
    fn field_validation() {
        assert!(check_field("ok-value", "id").is_ok());
        assert!(check_field("bad\tvalue", "id").is_err());
        assert!(check_field("bad\nvalue", "id").is_err());
    }
}
