//! Checkpoint container.
//!
//! ```text
//! u64 LE   header length in bytes
//! JSON     header: format, stage, phase, epoch, step, seed, config, tensors
//! f32 LE   payload, tensors back to back in manifest order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array4;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use crate::diffops::{to_f32_lattice, ParamStore};
use crate::error::{GavnError, Result};

pub const FORMAT: &str = "gavn-checkpoint-v1";
const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    /// `init`, `stage1`, `stage2` or `landmark`.
    pub stage: String,
    /// Phase within the stage (e.g. `warmup`, `finetune`).
    pub phase: String,
    /// Completed epochs within the phase.
    pub epoch: usize,
    /// Global optimizer steps taken so far.
    pub step: u64,
    pub seed: u64,
    pub adam_step: u64,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<Array4<f64>>,
}

/// Checkpoint metadata other than the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub stage: String,
    pub phase: String,
    pub epoch: usize,
    pub step: u64,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Checkpoint {
    /// Captures parameters and (optionally) Adam moments.
    pub fn capture(store: &ParamStore, adam: Option<&AdamState>, meta: CheckpointMeta) -> Self {
        let mut entries = Vec::new();
        let mut data = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, arr: &Array4<f64>| {
            let (a, b, c, d) = arr.dim();
            entries.push(TensorEntry {
                name,
                shape: [a, b, c, d],
                offset,
            });
            offset += arr.len();
            data.push(arr.mapv(to_f32_lattice));
        };
        for (_, p) in store.iter() {
            push(p.name.clone(), &p.data);
        }
        if let Some(adam) = adam {
            for (id, p) in store.iter() {
                if let Some(Some((m, v))) = adam.moments.get(id.0) {
                    push(format!("{ADAM_M}{}", p.name), m);
                    push(format!("{ADAM_V}{}", p.name), v);
                }
            }
        }
        Checkpoint {
            header: CheckpointHeader {
                format: FORMAT.to_string(),
                stage: meta.stage,
                phase: meta.phase,
                epoch: meta.epoch,
                step: meta.step,
                seed: meta.seed,
                adam_step: adam.map(|a| a.step).unwrap_or(0),
                config: meta.config,
                tensors: entries,
            },
            data,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let payload_len: usize = self.data.iter().map(|a| a.len()).sum();
        let mut out = Vec::with_capacity(8 + header.len() + 4 * payload_len);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for arr in &self.data {
            for &v in arr.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| GavnError::Checkpoint(m);
        if bytes.len() < 8 {
            return Err(bad("file too short for the header length".into()));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        if bytes.len() < 8 + hlen {
            return Err(bad(format!("header of {hlen} bytes is truncated")));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[8..8 + hlen]).map_err(|e| bad(format!("invalid header: {e}")))?;
        if header.format != FORMAT {
            return Err(bad(format!("unknown format `{}`", header.format)));
        }
        let mut expected = 0;
        for t in &header.tensors {
            if t.offset != expected {
                return Err(bad(format!(
                    "tensor `{}` starts at {} but the previous tensor ends at {expected}",
                    t.name, t.offset
                )));
            }
            expected += t.len();
        }
        let payload = &bytes[8 + hlen..];
        if payload.len() % 4 != 0 {
            return Err(bad(format!("payload length {} is not a multiple of 4", payload.len())));
        }
        let floats = payload.len() / 4;
        if let Some(t) = header.tensors.iter().find(|t| t.offset + t.len() > floats) {
            return Err(bad(format!(
                "payload truncated: tensor `{}` needs elements {}..{} but only {floats} are present",
                t.name,
                t.offset,
                t.offset + t.len()
            )));
        }
        if floats != expected {
            return Err(bad(format!("payload has {floats} elements, manifest describes {expected}")));
        }
        let data = header
            .tensors
            .iter()
            .map(|t| {
                let vals: Vec<f64> = payload[4 * t.offset..4 * (t.offset + t.len())]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect();
                let [a, b, c, d] = t.shape;
                Array4::from_shape_vec((a, b, c, d), vals).expect("length checked")
            })
            .collect();
        Ok(Checkpoint { header, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| GavnError::io(dir, e))?;
        }
        // Write to a sibling file first so an interrupted save never leaves a torn checkpoint.
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| GavnError::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| GavnError::io(&tmp, e))?;
        f.sync_all().map_err(|e| GavnError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| GavnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(GavnError::MissingPaths(vec![path.to_path_buf()]));
        }
        let bytes = fs::read(path).map_err(|e| GavnError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn get(&self, name: &str) -> Option<&Array4<f64>> {
        self.header.tensors.iter().position(|t| t.name == name).map(|i| &self.data[i])
    }

    /// Parameter tensors, excluding optimizer moments.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.header
            .tensors
            .iter()
            .map(|t| t.name.as_str())
            .filter(|n| !n.starts_with(ADAM_M) && !n.starts_with(ADAM_V))
    }

    /// Writes every stored parameter into `store`. Unknown names and shape
    /// mismatches are rejected; parameters of `store` that the checkpoint
    /// lacks are left as they are unless `require_all` is set.
    pub fn restore_params(&self, store: &mut ParamStore, require_all: bool) -> Result<()> {
        for name in self.param_names() {
            let id = store
                .id(name)
                .ok_or_else(|| GavnError::Checkpoint(format!("unknown parameter `{name}` in checkpoint")))?;
            let src = self.get(name).expect("listed");
            let dst = &mut store.get_mut(id).data;
            if dst.dim() != src.dim() {
                return Err(GavnError::Checkpoint(format!(
                    "parameter `{name}`: checkpoint shape {:?}, model shape {:?}",
                    src.dim(),
                    dst.dim()
                )));
            }
            dst.assign(src);
        }
        if require_all {
            let names: std::collections::HashSet<&str> = self.param_names().collect();
            if let Some((_, p)) = store.iter().find(|(_, p)| !names.contains(p.name.as_str())) {
                return Err(GavnError::Checkpoint(format!("checkpoint lacks parameter `{}`", p.name)));
            }
        }
        Ok(())
    }

    /// Rebuilds Adam state aligned with `store`.
    pub fn restore_adam(&self, store: &ParamStore) -> Result<AdamState> {
        let mut state = AdamState {
            step: self.header.adam_step,
            moments: vec![None; store.len()],
        };
        for (id, p) in store.iter() {
            let m = self.get(&format!("{ADAM_M}{}", p.name));
            let v = self.get(&format!("{ADAM_V}{}", p.name));
            match (m, v) {
                (Some(m), Some(v)) => state.moments[id.0] = Some((m.clone(), v.clone())),
                (None, None) => {}
                _ => {
                    return Err(GavnError::Checkpoint(format!(
                        "parameter `{}` has only one Adam moment",
                        p.name
                    )))
                }
            }
        }
        for name in self.header.tensors.iter().map(|t| &t.name) {
            if let Some(rest) = name.strip_prefix(ADAM_M).or_else(|| name.strip_prefix(ADAM_V)) {
                if store.id(rest).is_none() {
                    return Err(GavnError::Checkpoint(format!("Adam moment for unknown parameter `{rest}`")));
                }
            }
        }
        Ok(state)
    }
}

/// Hex SHA-256 of a file.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| GavnError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
