//! Model checkpoints: JSON metadata plus packed f32 tensors.
//!
//! Layout: magic `CKP1`, u32 version, u64 JSON length, the JSON bytes,
//! then every tensor back to back as little-endian f32. The JSON gains
//! an `arrays` index (name, shape, element offset) on write, which is
//! stripped again on read so metadata round-trips unchanged. Offsets
//! must be sequential and the data section must end exactly at the file
//! end, so truncated or padded files are rejected.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CKP1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Element (not byte) offset into the data section.
    offset: u64,
}

/// Write metadata and named tensors. Values are stored as f32, so reads
/// reproduce writes only to single precision; train/eval code works in
/// f64 but every persisted artifact goes through this rounding.
pub fn write_checkpoint(
    path: &Path,
    meta: &serde_json::Value,
    arrays: &[(String, &ArrayD<f64>)],
) -> Result<()> {
    let obj = meta
        .as_object()
        .ok_or_else(|| Error::InvalidInput("checkpoint metadata must be a JSON object".into()))?;
    if obj.contains_key("arrays") {
        return Err(Error::InvalidInput(
            "checkpoint metadata must not predefine `arrays`".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut index = Vec::with_capacity(arrays.len());
    let mut offset = 0u64;
    for (name, arr) in arrays {
        if name.is_empty() || !seen.insert(name.clone()) {
            return Err(Error::InvalidInput(format!(
                "tensor names must be unique and non-empty; offender: `{name}`"
            )));
        }
        index.push(ArrayEntry {
            name: name.clone(),
            shape: arr.shape().to_vec(),
            offset,
        });
        offset += arr.len() as u64;
    }
    let mut full = obj.clone();
    full.insert("arrays".into(), serde_json::to_value(&index).expect("index serializes"));
    let json = serde_json::to_vec(&serde_json::Value::Object(full)).expect("meta serializes");

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for (_, arr) in arrays {
        for &v in arr.iter() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Read back metadata (without the `arrays` index) and tensors in their
/// stored order.
pub fn read_checkpoint(path: &Path) -> Result<(serde_json::Value, Vec<(String, ArrayD<f64>)>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, expected CKP1"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io)?;
    let json_len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json).map_err(io)?;
    let meta: serde_json::Value = serde_json::from_slice(&json)
        .map_err(|e| Error::format(path, format!("metadata is not valid JSON: {e}")))?;
    let mut obj = match meta {
        serde_json::Value::Object(o) => o,
        _ => return Err(Error::format(path, "metadata must be a JSON object")),
    };
    let index_value = obj
        .remove("arrays")
        .ok_or_else(|| Error::format(path, "metadata lacks the `arrays` index"))?;
    let index: Vec<ArrayEntry> = serde_json::from_value(index_value)
        .map_err(|e| Error::format(path, format!("malformed `arrays` index: {e}")))?;

    let mut arrays = Vec::with_capacity(index.len());
    let mut expected_offset = 0u64;
    for entry in &index {
        if entry.offset != expected_offset {
            return Err(Error::format(
                path,
                format!(
                    "tensor `{}` at offset {}, expected {expected_offset}",
                    entry.name, entry.offset
                ),
            ));
        }
        let count: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 4];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(io)?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        let arr = ArrayD::from_shape_vec(entry.shape.clone(), data)
            .map_err(|e| Error::format(path, format!("tensor `{}`: {e}", entry.name)))?;
        arrays.push((entry.name.clone(), arr));
        expected_offset += count as u64;
    }
    match r.read(&mut [0u8; 1]) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(path, "trailing bytes after tensor data")),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok((serde_json::Value::Object(obj), arrays))
}
