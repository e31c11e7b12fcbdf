//! `BCDT` dataset tensor files.
//!
//! Little-endian layout: magic `BCDT`, version `u32`, then `N`, `T`, `C`, `K`
//! as `u64`, then `N*T*C` `f32` window values and `N*K` `f32` one-hot labels.
//! Class names and window origins live in a JSON sidecar next to the file
//! (`<file>.json`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetTensor, SeriesError, WindowOrigin};
use crate::scalar::Scalar;

pub const TENSOR_MAGIC: &[u8; 4] = b"BCDT";
pub const TENSOR_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 * 8;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    class_names: Vec<String>,
    #[serde(default)]
    origins: Vec<WindowOrigin>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_tensor<S: Scalar>(path: impl AsRef<Path>, tensor: &DatasetTensor<S>) -> Result<(), SeriesError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_FORMAT_VERSION.to_le_bytes())?;
    for dim in [tensor.n, tensor.t, tensor.c, tensor.k()] {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for v in tensor.data.iter().chain(&tensor.labels) {
        w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        class_names: tensor.class_names.clone(),
        origins: tensor.origins.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| SeriesError::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_tensor<S: Scalar>(path: impl AsRef<Path>) -> Result<DatasetTensor<S>, SeriesError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
        return Err(SeriesError::Format(format!("{} is not a BCDT file", path.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != TENSOR_FORMAT_VERSION {
        return Err(SeriesError::VersionMismatch {
            expected: TENSOR_FORMAT_VERSION,
            found: version,
        });
    }
    let dims: Vec<usize> = (0..4)
        .map(|i| usize::try_from(u64_at(8 + 8 * i)).map_err(|_| SeriesError::Format("dimension overflow".into())))
        .collect::<Result<_, _>>()?;
    let (n, t, c, k) = (dims[0], dims[1], dims[2], dims[3]);
    let values = n
        .checked_mul(t)
        .and_then(|v| v.checked_mul(c))
        .and_then(|v| v.checked_add(n.checked_mul(k)?))
        .ok_or_else(|| SeriesError::Format("dimension overflow".into()))?;
    if bytes.len() != HEADER_LEN + 4 * values {
        return Err(SeriesError::Format(format!(
            "expected {} bytes for {n}x{t}x{c} with {k} classes, found {}",
            HEADER_LEN + 4 * values,
            bytes.len()
        )));
    }
    let floats: Vec<S> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| S::from_f64_lossy(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    let split = n * t * c;

    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| SeriesError::Format(format!("sidecar: {e}")))?;
    if sidecar.class_names.len() != k {
        return Err(SeriesError::Format(format!(
            "sidecar lists {} classes, header says {k}",
            sidecar.class_names.len()
        )));
    }
    let origins = if sidecar.origins.len() == n {
        sidecar.origins
    } else {
        (0..n)
            .map(|i| WindowOrigin {
                source_id: format!("window-{i}"),
                start_frame: 0,
            })
            .collect()
    };
    Ok(DatasetTensor {
        n,
        t,
        c,
        data: floats[..split].to_vec(),
        labels: floats[split..].to_vec(),
        class_names: sidecar.class_names,
        origins,
    })
}
