//! `BCMD` checkpoint files.
//!
//! Little-endian layout: magic `BCMD`, format version `u32`, config JSON
//! (`u32` length + bytes), tensor manifest (`u32` count, then per tensor a
//! `u16`-prefixed name, `u8` rank and `u64` dims), `u64` value count, the
//! `f32` values in manifest order, and a CRC-32 of everything before it.

use std::path::Path;

use super::{ModelConfig, ModelError, ModelParams};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BCMD";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Writes every tensor, running statistics included, as `f32`.
pub fn save_checkpoint<S: Scalar>(params: &ModelParams<S>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(&params.config).expect("config serialises");
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    let specs = params.tensor_specs();
    buf.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for spec in &specs {
        buf.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(spec.name.as_bytes());
        buf.push(spec.shape.len() as u8);
        for &d in &spec.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    let total: usize = specs.iter().map(|s| s.len()).sum();
    buf.extend_from_slice(&(total as u64).to_le_bytes());
    params.visit(|_, t| {
        for v in t {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    });
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<S>, ModelError> {
    let bytes = std::fs::read(path)?;
    let corrupt = |m: &str| ModelError::CorruptCheckpoint(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing BCMD magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            expected: format!("format version {CHECKPOINT_FORMAT_VERSION}"),
            found: format!("format version {version}"),
        });
    }
    if bytes.len() < 12 {
        return Err(corrupt("truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch"));
    }

    let mut cur = Cursor { bytes: body, pos: 8 };
    let config_len = cur.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(cur.take(config_len)?).map_err(|e| corrupt(&format!("config: {e}")))?;
    config.validate().map_err(|e| corrupt(&e.to_string()))?;
    let mut params = ModelParams::<S>::zeros(&config);
    let specs = params.tensor_specs();
    let count = cur.u32()? as usize;
    if count != specs.len() {
        return Err(corrupt(&format!("manifest lists {count} tensors, config implies {}", specs.len())));
    }
    for spec in &specs {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8_lossy(cur.take(name_len)?).into_owned();
        let rank = cur.u8()? as usize;
        let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(corrupt(&format!(
                "tensor {name} {shape:?} does not match {} {:?}",
                spec.name, spec.shape
            )));
        }
    }
    let total = cur.u64()? as usize;
    if total != specs.iter().map(|s| s.len()).sum::<usize>() {
        return Err(corrupt("value count does not match manifest"));
    }
    let blob = cur.take(total.checked_mul(4).ok_or_else(|| corrupt("value count overflow"))?)?;
    if cur.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|b| S::from_f64_lossy(f32::from_le_bytes(b.try_into().unwrap()) as f64));
    params.visit_mut(|_, t| t.iter_mut().for_each(|v| *v = values.next().expect("sized by manifest")));
    Ok(params)
}

/// Loads a checkpoint and checks it was trained for `expected`'s shape.
pub fn load_checkpoint_expecting<S: Scalar>(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<ModelParams<S>, ModelError> {
    let params = load_checkpoint(path)?;
    let found = &params.config;
    let same = found.input_len == expected.input_len
        && found.channels == expected.channels
        && found.num_classes == expected.num_classes
        && found.block_filters == expected.block_filters
        && found.kernel_sizes == expected.kernel_sizes
        && found.padding == expected.padding;
    if !same {
        return Err(ModelError::VersionMismatch {
            expected: expected.shape_summary(),
            found: found.shape_summary(),
        });
    }
    Ok(params)
}
