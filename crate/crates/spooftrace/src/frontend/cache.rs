//! Binary on-disk format for extracted feature matrices.
//!
//! Layout (all little-endian):
//! `"FEA1"` magic, `u32` frame count, `u32` coefficient count,
//! `f32` window_ms, `f32` shift_ms, `u32` filter count,
//! `u32` delta flag (0 or 1), then `frames * coeffs` row-major `f32`
//! values. Values are stored at `f32` precision; computation stays in
//! `f64`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

use super::FeatureMatrix;

const MAGIC: &[u8; 4] = b"FEA1";

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(features.n_frames() as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(features.n_coeffs() as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(features.window_ms as f32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(features.shift_ms as f32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(features.n_filters as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(features.has_deltas as u32).to_le_bytes())
        .map_err(io)?;
    for row in features.data.rows() {
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, expected FEA1"));
    }
    let frames = read_u32(&mut r, path)? as usize;
    let coeffs = read_u32(&mut r, path)? as usize;
    let window_ms = read_f32(&mut r, path)? as f64;
    let shift_ms = read_f32(&mut r, path)? as f64;
    let n_filters = read_u32(&mut r, path)? as usize;
    let deltas_flag = read_u32(&mut r, path)?;
    if deltas_flag > 1 {
        return Err(Error::format(path, "delta flag must be 0 or 1"));
    }
    let mut data = Array2::zeros((frames, coeffs));
    for t in 0..frames {
        for j in 0..coeffs {
            data[[t, j]] = read_f32(&mut r, path)? as f64;
        }
    }
    let mut trailer = [0u8; 1];
    match r.read(&mut trailer) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(path, "trailing bytes after feature data")),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok(FeatureMatrix {
        data,
        window_ms,
        shift_ms,
        n_filters,
        has_deltas: deltas_flag == 1,
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read, path: &Path) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(f32::from_le_bytes(b))
}
