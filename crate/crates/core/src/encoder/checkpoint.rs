//! On-disk model format: `manifest.json` plus a little-endian f32 blob.
//!
//! The manifest lists each tensor's name, shape, dtype and byte offset into
//! `weights.bin`, together with the encoder configuration and the hash of the
//! vocabulary the model was trained with.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linearizer::Vocab;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
const FORMAT: &str = "geoctx-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub vocab_hash: String,
    pub config: EncoderConfig,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: EncoderConfig,
    pub vocab_hash: String,
    pub step: u64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `dir/manifest.json` and `dir/weights.bin`, creating `dir`.
pub fn save(dir: &Path, params: &ModelParams, cfg: &EncoderConfig, vocab_hash: &str, step: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(params.num_params() * 4);
    let mut tensors = Vec::new();
    for (name, t) in params.tensors() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset: blob.len() as u64,
        });
        for &x in t.iter() {
            blob.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: 1,
        step,
        vocab_hash: vocab_hash.into(),
        config: cfg.clone(),
        tensors,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&dir.join(WEIGHTS), &blob)?;
    write_atomic(&dir.join(MANIFEST), json.as_bytes())
}

fn schema(path: &Path, detail: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let mpath: PathBuf = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| schema(&mpath, e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != 1 {
        return Err(schema(
            &mpath,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    manifest.config.validate()?;
    let wpath = dir.join(WEIGHTS);
    let blob = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;

    let mut params = ModelParams::init(&manifest.config, 0);
    let mut expected = 0u64;
    let mut slots = params.tensors_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(schema(
            &mpath,
            format!("{} tensors listed, configuration implies {}", manifest.tensors.len(), slots.len()),
        ));
    }
    for ((name, view), entry) in slots.iter_mut().zip(&manifest.tensors) {
        if *name != entry.name || view.shape() != entry.shape.as_slice() || entry.dtype != "f32" {
            return Err(schema(
                &mpath,
                format!(
                    "tensor `{}` {:?} {} does not match expected `{}` {:?} f32",
                    entry.name,
                    entry.shape,
                    entry.dtype,
                    name,
                    view.shape()
                ),
            ));
        }
        if entry.offset != expected {
            return Err(schema(&mpath, format!("tensor `{name}` has offset {} (expected {expected})", entry.offset)));
        }
        let n = view.len() as u64;
        let end = expected + 4 * n;
        if end > blob.len() as u64 {
            return Err(Error::CorruptInput(format!("{} is truncated at tensor `{name}`", wpath.display())));
        }
        let bytes = &blob[expected as usize..end as usize];
        for (x, c) in view.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
        }
        expected = end;
    }
    drop(slots);
    if expected != blob.len() as u64 {
        return Err(Error::CorruptInput(format!(
            "{} has {} trailing bytes",
            wpath.display(),
            blob.len() as u64 - expected
        )));
    }
    Ok(Checkpoint {
        params,
        config: manifest.config,
        vocab_hash: manifest.vocab_hash,
        step: manifest.step,
    })
}

/// Loads a checkpoint and refuses it unless it was trained with `vocab`.
pub fn load_for_vocab(dir: &Path, vocab: &Vocab) -> Result<Checkpoint> {
    let ck = load(dir)?;
    let h = vocab.hash();
    if ck.vocab_hash != h {
        return Err(schema(
            &dir.join(MANIFEST),
            format!("checkpoint vocabulary {} differs from supplied vocabulary {h}", ck.vocab_hash),
        ));
    }
    if ck.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint vocab_size {} differs from vocabulary length {}",
            ck.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::forward_ids;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 30,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 16,
            max_seq_len: 12,
            n_classes: 3,
            tie_mlm_head: false,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg();
        let p = ModelParams::init(&c, 9);
        save(dir.path(), &p, &c, "abc", 17).unwrap();
        let ck = load(dir.path()).unwrap();
        assert_eq!(ck.params, p);
        assert_eq!(ck.step, 17);
        let ids = [2, 7, 8, 3, 9, 3];
        let d = [20.0, 0.0, 0.0, 20.0, 1.5, 20.0];
        let a = forward_ids::<ChaCha8Rng>(&ids, &d, &d, &p, &c, None).unwrap();
        let b = forward_ids::<ChaCha8Rng>(&ids, &d, &d, &ck.params, &c, None).unwrap();
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn truncated_blob_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg();
        save(dir.path(), &ModelParams::init(&c, 1), &c, "h", 0).unwrap();
        let w = dir.path().join(WEIGHTS);
        let mut bytes = fs::read(&w).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&w, bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::CorruptInput(_))));
    }

    #[test]
    fn unknown_manifest_key_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg();
        save(dir.path(), &ModelParams::init(&c, 1), &c, "h", 0).unwrap();
        let m = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&m).unwrap().replacen('{', "{\"extra\": 1,", 1);
        fs::write(&m, text).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Vocab::from_list(&["a", "b"]).unwrap();
        let c = EncoderConfig { vocab_size: vocab.len(), ..cfg() };
        save(dir.path(), &ModelParams::init(&c, 1), &c, "not-the-hash", 0).unwrap();
        assert!(matches!(load_for_vocab(dir.path(), &vocab), Err(Error::Schema { .. })));
    }
}
