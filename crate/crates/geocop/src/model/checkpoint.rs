//! Versioned binary checkpoint: a JSON header describing the config and the
//! tensor directory, followed by raw little-endian tensor data.

use super::{ModelConfig, ModelError, ModelParams};
use crate::nncore::{AdamState, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"GCOPCKPT";
const VERSION: u32 = 1;

/// Storage precision for tensor data. Training always runs in f64; f32 is a
/// smaller on-disk representation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointDtype {
    F64,
    F32,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    role: String,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    dtype: CheckpointDtype,
    adam: Option<AdamHeader>,
    tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

fn push_tensor(buf: &mut Vec<u8>, t: &Tensor, dtype: CheckpointDtype) {
    match dtype {
        CheckpointDtype::F64 => {
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        CheckpointDtype::F32 => {
            for &v in t.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
}

fn read_tensor(
    bytes: &[u8],
    offset: &mut usize,
    shape: &[usize],
    dtype: CheckpointDtype,
) -> Result<Tensor, ModelError> {
    let n: usize = shape.iter().product();
    let width = match dtype {
        CheckpointDtype::F64 => 8,
        CheckpointDtype::F32 => 4,
    };
    let end = *offset + n * width;
    if end > bytes.len() {
        return Err(ModelError::CheckpointMismatch("tensor data truncated".into()));
    }
    let mut data = Vec::with_capacity(n);
    for k in 0..n {
        let at = *offset + k * width;
        let v = match dtype {
            CheckpointDtype::F64 => {
                f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
            }
            CheckpointDtype::F32 => {
                f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64
            }
        };
        data.push(v);
    }
    *offset = end;
    Ok(Tensor::from_vec(shape, data))
}

/// Writes parameters, config, and (optionally) optimizer state.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    adam: Option<&AdamState>,
    dtype: CheckpointDtype,
) -> Result<(), ModelError> {
    let live = params.params();
    let mut tensors: Vec<TensorEntry> = live
        .iter()
        .map(|p| TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            role: "param".into(),
        })
        .collect();
    let mut data = Vec::new();
    for p in &live {
        push_tensor(&mut data, &p.value, dtype);
    }

    let adam_header = adam.map(|a| AdamHeader {
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        t: a.t,
    });
    if let Some(a) = adam {
        let (m, v) = a.moments();
        if !m.is_empty() {
            if m.len() != live.len() {
                return Err(ModelError::CheckpointMismatch(
                    "optimizer moments do not match the parameter list".into(),
                ));
            }
            for (p, t) in live.iter().zip(m) {
                tensors.push(TensorEntry {
                    name: format!("adam.m.{}", p.name),
                    shape: t.shape().to_vec(),
                    role: "adam_m".into(),
                });
                push_tensor(&mut data, t, dtype);
            }
            for (p, t) in live.iter().zip(v) {
                tensors.push(TensorEntry {
                    name: format!("adam.v.{}", p.name),
                    shape: t.shape().to_vec(),
                    role: "adam_v".into(),
                });
                push_tensor(&mut data, t, dtype);
            }
        }
    }

    let header = Header { config: params.config, dtype, adam: adam_header, tensors };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| ModelError::CheckpointMismatch(format!("header encode: {e}")))?;

    let mut out = Vec::with_capacity(24 + header_json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&data);
    fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint back into freshly shaped parameters.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(ModelError::CheckpointMismatch("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::CheckpointMismatch(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if 20 + header_len > bytes.len() {
        return Err(ModelError::CheckpointMismatch("header truncated".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[20..20 + header_len])
        .map_err(|e| ModelError::CheckpointMismatch(format!("header decode: {e}")))?;

    let mut offset = 20 + header_len;
    let mut params = ModelParams::init(header.config, 0)?;
    let mut adam_m: Vec<Tensor> = Vec::new();
    let mut adam_v: Vec<Tensor> = Vec::new();

    for entry in &header.tensors {
        let tensor = read_tensor(&bytes, &mut offset, &entry.shape, header.dtype)?;
        match entry.role.as_str() {
            "param" => {
                let live = params.params_mut();
                let p = live
                    .into_iter()
                    .find(|p| p.name == entry.name)
                    .ok_or_else(|| {
                        ModelError::CheckpointMismatch(format!(
                            "unknown parameter {:?} for this config",
                            entry.name
                        ))
                    })?;
                if p.value.shape() != entry.shape.as_slice() {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "parameter {:?} has shape {:?}, checkpoint says {:?}",
                        entry.name,
                        p.value.shape(),
                        entry.shape
                    )));
                }
                p.value = tensor;
            }
            "adam_m" => adam_m.push(tensor),
            "adam_v" => adam_v.push(tensor),
            other => {
                return Err(ModelError::CheckpointMismatch(format!(
                    "unknown tensor role {other:?}"
                )))
            }
        }
    }

    let n_live = params.params().len();
    let adam = match header.adam {
        None => None,
        Some(a) => {
            if !adam_m.is_empty() && (adam_m.len() != n_live || adam_v.len() != n_live) {
                return Err(ModelError::CheckpointMismatch(
                    "optimizer moment count does not match parameters".into(),
                ));
            }
            Some(AdamState::from_parts(a.lr, a.beta1, a.beta2, a.eps, a.t, adam_m, adam_v))
        }
    };

    Ok(Checkpoint { params, adam })
}

#[cfg(test)]
mod tests {
    use super::super::{ModelConfig, ModelParams, StartToken};
    use super::*;
    use crate::Task;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("geocop-ckpt-test-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn round_trips_params_and_adam() {
        let mut config = ModelConfig::new(Task::Tsp).with_hidden(6);
        config.start_token = StartToken::Learned;
        let mut params = ModelParams::init(config, 3).unwrap();
        let mut adam = AdamState::new(config.lr, config.beta1, config.beta2);
        // One step so the moments are non-trivial.
        for p in params.params_mut() {
            p.grad.fill(0.25);
        }
        adam.step(&mut params.params_mut());

        let path = tmp("rt.ckpt");
        save_checkpoint(&path, &params, Some(&adam), CheckpointDtype::F64).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params.config, config);
        for (a, b) in loaded.params.params().iter().zip(params.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        let la = loaded.adam.unwrap();
        assert_eq!(la.t, adam.t);
        assert_eq!(la.moments().0, adam.moments().0);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn f32_storage_is_close_but_lossy() {
        let config = ModelConfig::new(Task::Dt).with_hidden(6);
        let params = ModelParams::init(config, 4).unwrap();
        let path = tmp("f32.ckpt");
        save_checkpoint(&path, &params, None, CheckpointDtype::F32).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for (a, b) in loaded.params.params().iter().zip(params.params()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn garbage_is_rejected() {
        let path = tmp("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::CheckpointMismatch(_))
        ));
        std::fs::remove_file(path).ok();
    }
}
