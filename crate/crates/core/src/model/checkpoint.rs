//! Checkpoint files: one JSON header line, then a binary parameter blob.
//!
//! The header carries the format version, model kind and architecture
//! config, training progress, and a parameter manifest (path, shape, Adam
//! step). The blob holds value, Adam m, and Adam v for every parameter in
//! store path order as little-endian f64, so a load restores training
//! bit-exactly — optimizer state included.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{CoreError, Result};
use crate::tensor::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Biscuit,
    Nf,
}

/// Everything needed to rebuild the model around the restored parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub obs_dim: usize,
    pub config: ModelConfig,
    /// Epochs completed when the checkpoint was written.
    pub epoch: usize,
    pub tau: f64,
    /// NF staging flag; always false for the VAE kind.
    pub ae_trained: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    meta: CheckpointMeta,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    path: String,
    shape: Vec<usize>,
    step: u64,
}

pub fn save(path: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    let params: Vec<ParamEntry> = store
        .entries()
        .map(|(p, shape, _, _, _, step)| ParamEntry {
            path: p.to_string(),
            shape: shape.to_vec(),
            step,
        })
        .collect();
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        params,
    };
    let mut bytes = serde_json::to_string(&header)
        .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?
        .into_bytes();
    bytes.push(b'\n');
    for (_, _, value, m, v, _) in store.entries() {
        for block in [value, m, v] {
            for x in block {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let err = |reason: String| CoreError::format(path.display().to_string(), reason);
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| err("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| err(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(err(format!(
            "format version {} unsupported (expected {CHECKPOINT_VERSION})",
            header.format_version
        )));
    }
    let scalars: usize = header
        .params
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum();
    let blob = &bytes[nl + 1..];
    let expected = scalars * 3 * 8;
    if blob.len() != expected {
        return Err(err(format!(
            "parameter blob is {} bytes, expected {expected}",
            blob.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut off = 0;
    let mut take = |n: usize| -> Vec<f64> {
        let out = blob[off..off + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * n;
        out
    };
    for p in &header.params {
        let n = p.shape.iter().product::<usize>();
        let (value, m, v) = (take(n), take(n), take(n));
        store.insert(&p.path, vec![0.0; n], p.shape.clone())?;
        store.restore(&p.path, value, m, v, p.step)?;
    }
    Ok((store, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BiscuitModel, ModelConfig};
    use crate::rng::RngStream;
    use crate::tensor::Tensor;

    fn demo_store() -> (ParamStore, BiscuitModel) {
        let mut store = ParamStore::new();
        let config = ModelConfig {
            latents: Some(4),
            enc_hidden: 8,
            prior_hidden: 4,
            ..ModelConfig::default()
        };
        let model =
            BiscuitModel::init(&mut store, 2, &config, &RngStream::new(5).split("ckpt", 0))
                .unwrap();
        (store, model)
    }

    fn demo_meta() -> CheckpointMeta {
        CheckpointMeta {
            kind: ModelKind::Biscuit,
            obs_dim: 2,
            config: ModelConfig {
                latents: Some(4),
                enc_hidden: 8,
                prior_hidden: 4,
                ..ModelConfig::default()
            },
            epoch: 17,
            tau: 1.68,
            ae_trained: false,
        }
    }

    #[test]
    fn round_trip_restores_params_and_optimizer_state_bit_exactly() {
        let (mut store, _) = demo_store();
        // Give optimizer state distinctive non-zero values.
        let snap: Vec<(String, Vec<f64>)> = store
            .entries()
            .map(|(p, _, v, ..)| (p.to_string(), v.to_vec()))
            .collect();
        for (i, (p, v)) in snap.into_iter().enumerate() {
            let n = v.len();
            let m: Vec<f64> = (0..n).map(|j| 0.01 * (i * 131 + j) as f64).collect();
            let vv: Vec<f64> = (0..n).map(|j| 1e-4 * (j + 1) as f64).collect();
            store.restore(&p, v, m, vv, 42 + i as u64).unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &store, &demo_meta()).unwrap();
        let (loaded, meta) = load(&path).unwrap();

        assert_eq!(meta, demo_meta());
        assert_eq!(store.len(), loaded.len());
        for ((p1, s1, v1, m1, vv1, t1), (p2, s2, v2, m2, vv2, t2)) in
            store.entries().zip(loaded.entries())
        {
            assert_eq!(p1, p2);
            assert_eq!(s1, s2);
            assert_eq!(v1, v2);
            assert_eq!(m1, m2);
            assert_eq!(vv1, vv2);
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn save_load_save_produces_identical_bytes() {
        let (store, _) = demo_store();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save(&p1, &store, &demo_meta()).unwrap();
        let (loaded, meta) = load(&p1).unwrap();
        save(&p2, &loaded, &meta).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_store_drives_an_attached_model() {
        let (store, model) = demo_store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &store, &demo_meta()).unwrap();
        let (loaded, meta) = load(&path).unwrap();
        let attached = BiscuitModel::attach(meta.obs_dim, &meta.config).unwrap();

        let x = Tensor::from_vec(vec![0.3, -0.8, 1.1, 0.0], vec![2, 2]).unwrap();
        let (m1, s1) = model.encode(&store, &x).unwrap();
        let (m2, s2) = attached.encode(&loaded, &x).unwrap();
        assert_eq!(m1.data(), m2.data());
        assert_eq!(s1.data(), s2.data());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (store, _) = demo_store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &store, &demo_meta()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        fs::write(&path, &bytes).unwrap();
        let msg = load(&path).unwrap_err().to_string();
        assert!(msg.contains("blob"), "unhelpful error: {msg}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let (store, _) = demo_store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &store, &demo_meta()).unwrap();
        let bytes = fs::read(&path).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(bytes[..nl].to_vec())
            .unwrap()
            .replacen("\"format_version\":1", "\"format_version\":999", 1);
        let mut patched = header.into_bytes();
        patched.extend_from_slice(&bytes[nl..]);
        fs::write(&path, patched).unwrap();
        let msg = load(&path).unwrap_err().to_string();
        assert!(msg.contains("version"), "unhelpful error: {msg}");
    }
}
