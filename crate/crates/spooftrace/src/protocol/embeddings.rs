//! Fixed-dimension embedding sets and their binary file format.
//!
//! File layout (little-endian): `"EMB1"` magic, `u32` record count,
//! `u32` dimension, then per record a `u16` id byte-length, the UTF-8 id,
//! and `dim` `f32` values. Values are held as `f64` in memory.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";

/// Utterance-id → embedding vector map with a single shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dim must be positive".into()));
        }
        Ok(EmbeddingSet {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "embedding `{id}` has length {} but the set dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding `{id}` contains a non-finite value"
            )));
        }
        if self.vectors.insert(id.clone(), vector).is_some() {
            return Err(Error::DuplicateId { id });
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(|v| v.as_slice())
    }

    /// Deterministic id order (sorted).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Copy with every vector scaled to unit L2 norm.
    ///
    /// A zero vector cannot be placed on the sphere and is an error.
    pub fn normalized(&self) -> Result<EmbeddingSet> {
        let mut out = EmbeddingSet::new(self.dim)?;
        for (id, v) in &self.vectors {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "embedding `{id}` has zero norm"
                )));
            }
            out.insert(id.clone(), v.iter().map(|x| x / norm).collect())?;
        }
        Ok(out)
    }
}

pub fn write_embeddings(path: &Path, emb: &EmbeddingSet) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(emb.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(emb.dim() as u32).to_le_bytes()).map_err(io)?;
    for (id, vector) in emb.iter() {
        let bytes = id.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidInput(format!("id `{id}` is too long")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(bytes).map_err(io)?;
        for &v in vector {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, expected EMB1"));
    }
    let count = read_u32(&mut r, path)? as usize;
    let dim = read_u32(&mut r, path)? as usize;
    let mut emb = EmbeddingSet::new(dim).map_err(|_| Error::format(path, "zero dimension"))?;
    for _ in 0..count {
        let mut len_bytes = [0u8; 2];
        r.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
        let id_len = u16::from_le_bytes(len_bytes) as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes).map_err(|e| Error::io(path, e))?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| Error::format(path, "record id is not UTF-8"))?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
            vector.push(f32::from_le_bytes(b) as f64);
        }
        emb.insert(id, vector)?;
    }
    let mut trailer = [0u8; 1];
    match r.read(&mut trailer) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(path, "trailing bytes after records")),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok(emb)
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_records() {
        let mut emb = EmbeddingSet::new(3).unwrap();
        emb.insert("u1", vec![1.0, 2.0, 3.0]).unwrap();
        emb.insert("u2", vec![-0.5, 0.25, 0.125]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.emb");
        write_embeddings(&path, &emb).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, emb);
    }

    #[test]
    fn dimension_and_duplicates_guarded() {
        let mut emb = EmbeddingSet::new(2).unwrap();
        emb.insert("a", vec![1.0, 0.0]).unwrap();
        assert!(emb.insert("b", vec![1.0]).is_err());
        assert!(emb.insert("a", vec![0.0, 1.0]).is_err());
        assert!(emb.insert("c", vec![f64::NAN, 0.0]).is_err());
        assert!(EmbeddingSet::new(0).is_err());
    }

    #[test]
    fn normalization_unit_norm_and_zero_vector_error() {
        let mut emb = EmbeddingSet::new(2).unwrap();
        emb.insert("a", vec![3.0, 4.0]).unwrap();
        let n = emb.normalized().unwrap();
        let v = n.get("a").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
        emb.insert("z", vec![0.0, 0.0]).unwrap();
        assert!(emb.normalized().is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        std::fs::write(&path, b"NOPExxxx").unwrap();
        assert!(read_embeddings(&path).is_err());
    }
}
